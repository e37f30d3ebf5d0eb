import json
from pathlib import Path

import pytest

from debloatkit import corpus
from debloatkit.analysis import build_cfg, dominators, loops
from debloatkit.ir import UnknownInstId, parse_program
from debloatkit.neck_miner import (
    MinerConfig, NoAdmissibleCandidate, NoHeuristicMatch, ProgramCategory,
    heuristic_start, mine_neck, structural_candidates,
)

FIXTURES = Path(__file__).parent / "fixtures"
CLI = MinerConfig(ProgramCategory.COMMAND_LINE)
CONFIG = MinerConfig(ProgramCategory.CONFIG_FILE)


def _inst(p, iid):
    return p.locate(iid)[1].insts[p.locate(iid)[2]]


def test_wc_heuristic_start_is_first_option_compare(wc):
    start = heuristic_start(wc, CLI)
    fn, block, _ = wc.locate(start)
    inst = _inst(wc, start)
    assert block.label == "args_body"
    assert inst.op == "call" and inst.operands[0].name == "str_eq"
    assert inst.operands[2].data == b"-c"


def test_wc_loop_candidates_rejected(wc):
    cands = structural_candidates(wc, heuristic_start(wc, CLI))
    by_block = {c.block: c for c in cands}
    for label in ("args_body", "args_cond"):
        ev = by_block[label].evidence
        assert not ev.executed_once and not ev.articulation
        assert not ev.admissible


def test_wc_neck_block_admissible(wc):
    cands = structural_candidates(wc, heuristic_start(wc, CLI))
    c = next(c for c in cands if c.block == "read_pre")
    assert c.evidence.executed_once and c.evidence.articulation and c.evidence.dominates_rest
    assert c.offset == 0


def test_wc_mined_neck(wc):
    necked, report = mine_neck(wc, CLI)
    blk = necked.function("main").block("read_pre")
    assert blk.insts[0].op == "neckmark"
    assert report.chosen_block == "read_pre"
    assert necked.neck_ids() == [report.neck_id]


def test_mine_is_deterministic(wc):
    a = json.dumps(mine_neck(wc, CLI)[1].as_dict(), sort_keys=True)
    b = json.dumps(mine_neck(wc, CLI)[1].as_dict(), sort_keys=True)
    assert a == b


def test_two_admissible_candidates_pick_closer():
    p = parse_program((FIXTURES / "two_candidates.ir").read_text())
    cands = structural_candidates(p, heuristic_start(p, CLI))
    ok = {c.block: c.distance for c in cands if c.evidence.admissible}
    assert ok == {"phase1": 3, "phase2": 5}
    _, report = mine_neck(p, CLI)
    assert report.chosen_block == "phase1"


def test_straight_line_all_admissible():
    p = parse_program("""fn @main(%argc: int, %argv: ptr<ptr<byte>>) -> int {
entry:
  br b
b:
  br c
c:
  ret 0
}
""")
    cands = structural_candidates(p, 1)
    assert [c.block for c in cands] == ["entry", "b", "c"]
    assert all(c.evidence.admissible for c in cands)


def test_no_argv_use():
    p = parse_program("fn @main(%argc: int, %argv: ptr<ptr<byte>>) -> int {\nentry:\n  ret 0\n}\n")
    with pytest.raises(NoHeuristicMatch):
        mine_neck(p, CLI)


def test_argv_use_outside_loop_does_not_count():
    p = parse_program("""fn @main(%argc: int, %argv: ptr<ptr<byte>>) -> int {
entry:
  %ap = index %argv, 1
  %a = load %ap
  %n = call @atoi, %a
  ret %n
}
""")
    with pytest.raises(NoHeuristicMatch):
        heuristic_start(p, CLI)


def test_config_start_is_the_parsing_call():
    p = corpus.load("config_demo")
    start = heuristic_start(p, CONFIG)
    inst = _inst(p, start)
    assert inst.op == "call" and inst.operands[0].name == "read_cfg_line"
    _, report = mine_neck(p, CONFIG)
    assert report.chosen_block == "setup"


def test_config_category_needs_api():
    with pytest.raises(ValueError):
        MinerConfig(ProgramCategory.CONFIG_FILE, ())


def test_no_admissible_candidate():
    p = parse_program("""fn @main(%argc: int, %argv: ptr<ptr<byte>>) -> int {
entry:
  %buf = alloca arr<byte, 8>
  %bp = index %buf, 0
  %c = ge %argc, 5
  cbr %c, spin, done
spin:
  %n = call @read_cfg_line, %bp, 8
  br spin
done:
  ret 0
}
""")
    with pytest.raises(NoAdmissibleCandidate):
        mine_neck(p, CONFIG)


def test_unknown_start():
    p = corpus.load("wc")
    with pytest.raises(UnknownInstId):
        structural_candidates(p, 9999)


@pytest.mark.parametrize("prog", corpus.programs(), ids=lambda p: p.name)
def test_corpus_neck_outside_loops(prog):
    p = prog.load()
    necked, report = mine_neck(p, MinerConfig(prog.category))
    fn = necked.function(report.function)
    g = build_cfg(fn)
    assert not loops(g, dominators(g)).in_loop(report.chosen_block)
