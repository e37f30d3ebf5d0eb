import pytest

from debloatkit import corpus
from debloatkit.harness import stats
from debloatkit.interp import Invocation, run_full
from debloatkit.ir import IntVal, parse_program, print_program, validate
from debloatkit.simplify import cleanup, constant_fold, remove_neckmark, run_simplify, simplify_cfg

from conftest import debloated

HDR = "fn @main(%argc: int, %argv: ptr<ptr<byte>>) -> int {\n"
PAIRS = [(p.name, c.slug) for p, c in corpus.pairs()]


def _main(body, extra=""):
    return parse_program(extra + HDR + body + "}\n")


def _ops(fn):
    return [i.op for i in fn.instructions()]


def test_fold_add():
    p = _main("entry:\n  %x = add 3, 4\n  ret %x\n")
    out, rep = constant_fold(p)
    inst = out.function("main").blocks[0].insts[0]
    assert inst.op == "const" and inst.operands[0] == IntVal(7)
    assert inst.id == p.function("main").blocks[0].insts[0].id
    assert rep.folded == 1


def test_fold_chains_through_registers():
    p = _main("entry:\n  %x = add 3, 4\n  %y = mul %x, 2\n  %c = lt %y, 10\n  ret %c\n")
    out, _ = constant_fold(p)
    insts = out.function("main").blocks[0].insts
    assert [i.operands[0] for i in insts[:3]] == [IntVal(7), IntVal(14), IntVal(0)]


def test_fold_wraps():
    p = _main("entry:\n  %x = add 9223372036854775807, 1\n  ret %x\n")
    out, _ = constant_fold(p)
    assert out.function("main").blocks[0].insts[0].operands[0] == IntVal(-(2 ** 63))


def test_fold_div_by_zero_is_recorded_not_folded():
    p = _main("entry:\n  %x = div 1, 0\n  ret %x\n")
    out, rep = constant_fold(p)
    assert out.function("main").blocks[0].insts[0].op == "div"
    assert rep.fold_traps == [p.function("main").blocks[0].insts[0].id]


def test_constant_branch():
    p = _main("entry:\n  %c = eq 1, 1\n  cbr %c, a, b\na:\n  ret 1\nb:\n  ret 2\n")
    out, _ = run_simplify(p, {"main"})
    fn = out.function("main")
    assert [b.label for b in fn.blocks] == ["entry"]
    assert _ops(fn) == ["ret"]
    assert fn.blocks[0].insts[-1].operands[0] == IntVal(1)


def test_same_target_branch():
    p = _main("entry:\n  %c = ge %argc, 2\n  cbr %c, a, a\na:\n  ret 0\n")
    out, _ = constant_fold(p)
    assert out.function("main").blocks[0].insts[-1].op == "br"


def test_orphan_block_removed():
    p = _main("entry:\n  ret 0\norphan:\n  ret 1\n")
    fn, rep = simplify_cfg(p.function("main"))
    assert [b.label for b in fn.blocks] == ["entry"]
    assert rep.removed_blocks == 1 and rep.removed_insts == 1


def test_chain_merge():
    p = _main("entry:\n  br a\na:\n  br b\nb:\n  ret 0\n")
    fn, _ = simplify_cfg(p.function("main"))
    assert [b.label for b in fn.blocks] == ["entry"]
    assert _ops(fn) == ["ret"]


def test_no_merge_into_join():
    p = _main("entry:\n  %c = ge %argc, 2\n  cbr %c, a, j\na:\n  br j\nj:\n  ret 0\n")
    fn, _ = simplify_cfg(p.function("main"))
    assert [b.label for b in fn.blocks] == ["entry", "a", "j"]


FPTR = """global @h : ptr<byte> = null

fn @inc(%x: int) -> int {
entry:
  %y = add %x, 1
  ret %y
}

fn @unused(%x: int) -> int {
entry:
  ret %x
}

"""


def test_address_taken_function_kept():
    p = _main("entry:\n  %f = funcaddr @inc\n  store %f, @h\n  %g = load @h\n"
              "  %r = icall %g, 1\n  ret %r\n", FPTR)
    assert not validate(p, require_main=True)
    out, rep = cleanup(p, {"main"})
    names = {f.name for f in out.functions}
    assert "inc" in names and "unused" not in names
    assert rep.removed_funcs == 1


def test_visited_function_kept_while_called():
    extra = "fn @two() -> int {\nentry:\n  ret 2\n}\n\n"
    p = _main("entry:\n  %r = call @two\n  ret %r\n", extra)
    out, _ = cleanup(p, {"main", "two"})
    assert out.has_function("two")


def test_unused_global_removed():
    p = _main("entry:\n  ret 0\n", "global @g : int = 3\n\n")
    out, rep = cleanup(p, {"main"})
    assert not out.globals and rep.removed_globals == 1


def test_single_store_alloca_removed():
    p = _main("entry:\n  %a = alloca int\n  store 5, %a\n  ret 0\n")
    out, _ = cleanup(p, {"main"})
    assert _ops(out.function("main")) == ["ret"]


def test_loaded_alloca_kept():
    p = _main("entry:\n  %a = alloca int\n  store 5, %a\n  %v = load %a\n  ret %v\n")
    out, _ = cleanup(p, {"main"})
    assert _ops(out.function("main")) == ["alloca", "store", "load", "ret"]


def test_side_effects_kept():
    p = _main('entry:\n  call @print_int, 1\n  %x = div 4, %argc\n  ret 0\n')
    out, _ = run_simplify(p, {"main"})
    assert _ops(out.function("main")) == ["call", "div", "ret"]


def test_neckmark_removed_last(wc):
    from debloatkit.neck_miner import MinerConfig, mine_neck

    necked, _ = mine_neck(wc, MinerConfig("cli"))
    assert not remove_neckmark(necked).neck_ids()
    out, reports = run_simplify(necked, {"main"})
    assert not out.neck_ids()
    assert {r.pass_name for r in reports} == {"constant_fold", "simplify_cfg", "cleanup"}


@pytest.mark.parametrize("name,slug", PAIRS)
def test_fixpoint(name, slug):
    out, _ = debloated(name, slug)
    again, reports = run_simplify(out, {"main"} | set(f.name for f in out.functions))
    assert again == out
    assert not any(r.changed for r in reports)


@pytest.mark.parametrize("name", [p.name for p in corpus.programs()])
def test_monotone_on_originals(name):
    p = corpus.load(name)
    out, _ = run_simplify(p, {f.name for f in p.functions})
    a, b = stats(p), stats(out)
    assert b.ir_insts <= a.ir_insts and b.funcs <= a.funcs
    assert b.basic_blocks <= a.basic_blocks and b.globals <= a.globals
    assert not validate(out, require_main=True)


def test_simplify_preserves_wc_behavior(wc):
    out, _ = run_simplify(wc, {"main", "decodeChar"})
    for args in [("-l",), ("-c",), ("-l", "-c"), ()]:
        inv = Invocation(args, b"one\ntwo three\n")
        assert run_full(out, inv).stdout == run_full(wc, inv).stdout


def test_printing_stable_after_simplify(wc):
    out, _ = run_simplify(wc, {"main", "decodeChar"})
    assert parse_program(print_program(out)) == out
