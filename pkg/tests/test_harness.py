import io
import json
from dataclasses import replace

import pytest

from debloatkit import corpus
from debloatkit.harness import (
    PRINTABLE, Extension, SizeStats, diff_run, random_delayed_inputs, reduction_report, stats,
)

from conftest import debloated


def _drop_line_count(p):
    """wc with the store that bumps the line counter removed."""
    fn = p.function("main")
    blocks = tuple(
        replace(b, insts=tuple(i for i in b.insts if not (i.op == "store" and i.operands[1].name == "total_lines")))
        if b.label == "count_lines" else b
        for b in fn.blocks)
    return replace(p, functions=tuple(replace(f, blocks=blocks) if f.name == "main" else f
                                      for f in p.functions))


def test_identity_passes(wc):
    rep = diff_run(wc, wc, ["-l"], random_delayed_inputs(1, 20))
    assert rep.verdict == "Pass" and rep.trials == 20


def test_over_pruned_mutant_fails(wc):
    bad = _drop_line_count(wc)
    rep = diff_run(wc, bad, ["-l"], [b"a\nb\n"] + random_delayed_inputs(2, 10))
    assert rep.verdict == "Fail"
    m = rep.mismatches[0]
    assert m.original.stdout == b"#Lines = 2" and m.specialized.stdout == b"#Lines = 0"
    d = json.loads(rep.to_json())
    assert d["mismatches"][0]["invocation"]["stdin"] == "a\nb\n"


def test_verdict_symmetric(wc):
    bad = _drop_line_count(wc)
    exts = random_delayed_inputs(3, 15)
    a = diff_run(wc, bad, ["-l"], exts)
    b = diff_run(bad, wc, ["-l"], exts)
    assert a.verdict == b.verdict
    assert [m.trial for m in a.mismatches] == [m.trial for m in b.mismatches]


def test_traps_compared_by_kind(wc):
    from debloatkit.ir import parse_program

    div0 = parse_program("fn @main(%argc: int, %argv: ptr<ptr<byte>>) -> int {\nentry:\n"
                         "  %z = sub %argc, %argc\n  %q = div 1, %z\n  ret %q\n}\n")
    assert diff_run(div0, div0, [], [b""]).verdict == "Pass"
    assert diff_run(div0, wc, [], [b""]).verdict == "Fail"


def test_extra_args_appended(wc):
    rep = diff_run(wc, wc, [], [Extension(b"x\n", ("-l",))])
    assert rep.verdict == "Pass"


def test_inputs_deterministic():
    assert random_delayed_inputs(5, 30) == random_delayed_inputs(5, 30)
    assert random_delayed_inputs(5, 30) != random_delayed_inputs(6, 30)
    assert random_delayed_inputs(5, 30, "bytes") == random_delayed_inputs(5, 30, "bytes")


def test_text_profile_contract():
    for ext in random_delayed_inputs(11, 200):
        lines = ext.stdin.split(b"\n")
        if ext.stdin.endswith(b"\n"):
            lines = lines[:-1]
        assert len(lines) <= 50
        for line in lines:
            assert len(line) <= 80
            assert all(c in PRINTABLE for c in line)


def test_bytes_profile_contract():
    for ext in random_delayed_inputs(11, 100, "bytes"):
        assert len(ext.stdin) <= 400 and 0 not in ext.stdin


def test_bad_profile_and_count():
    with pytest.raises(ValueError):
        random_delayed_inputs(0, 0)
    with pytest.raises(ValueError):
        random_delayed_inputs(0, 1, "utf8")


def test_line_counts_match_python_readlines(wc):
    # every generated line is shorter than the 1024-byte buffer, so
    # fgets-style reading and readlines agree
    from debloatkit.interp import Invocation, run_full

    for ext in random_delayed_inputs(7, 100):
        n = len(io.BytesIO(ext.stdin).readlines())
        assert run_full(wc, Invocation(("-l",), ext.stdin)).stdout == b"#Lines = %d" % n


def test_reduction_identity():
    s = SizeStats(10, 2, 4, 1)
    assert reduction_report(s, s) == {"irInsts": 0.0, "funcs": 0.0, "basicBlocks": 0.0, "globals": 0.0}


def test_reduction_half():
    assert reduction_report(SizeStats(4, 2, 2, 2), SizeStats(2, 1, 1, 1))["funcs"] == 50.0


def test_reduction_skips_zero_baseline():
    assert "globals" not in reduction_report(SizeStats(4, 1, 1, 0), SizeStats(4, 1, 1, 0))


def test_wc_stats(wc):
    # instruction and label lines of wc.ir counted with grep
    assert stats(wc) == SizeStats(ir_insts=97, funcs=2, basic_blocks=26, globals=2)


def test_wc_l_debloated_stats():
    out, report = debloated("wc", "l")
    assert stats(out) == SizeStats(48, 1, 12, 1)
    assert round(report.reduction["irInsts"], 2) == 50.52


@pytest.mark.parametrize("name,slug", [(p.name, c.slug) for p, c in corpus.pairs()])
def test_corpus_pair_passes(name, slug):
    prog = corpus.program(name)
    cfg = next(c for c in prog.configs if c.slug == slug)
    out, _ = debloated(name, slug)
    profile = "bytes" if name == "wc" else "text"
    rep = diff_run(prog.load(), out, cfg.args, random_delayed_inputs(3, 20, profile),
                   cfg.config_input.encode("latin-1"))
    assert rep.verdict == "Pass", rep.to_json()
