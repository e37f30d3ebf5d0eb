import pytest
from hypothesis import given, settings, strategies as st

from debloatkit import corpus
from debloatkit.ir import (
    INT, Arr, ByteVal, DuplicateNeck, GlobalDef, IntVal, IRSyntaxError, Ptr,
    ResolutionError, StrVal, UnknownInstId, insert_neck_marker, parse_program,
    parse_type, print_program, size_of, validate,
)


def test_empty_program():
    p = parse_program("")
    assert p.structs == () and p.globals == () and p.functions == ()
    assert print_program(p) == ""


def test_wc_shape(wc):
    assert {g.name for g in wc.globals} == {"total_lines", "total_chars"}
    assert {f.name for f in wc.functions} == {"main", "decodeChar"}
    assert wc.struct("Flags").fields[0] == parse_type("byte")
    assert wc.struct("Flags").fields[1] == INT


def test_unknown_label_is_resolution_error():
    with pytest.raises(ResolutionError):
        parse_program("fn @main() {\nentry:\n  br Lx\n}\n")


def test_unknown_global_and_function():
    with pytest.raises(ResolutionError):
        parse_program("fn @f() -> int {\nentry:\n  %a = load @nope\n  ret %a\n}\n")
    with pytest.raises(ResolutionError):
        parse_program("fn @f() {\nentry:\n  call @nope\n  ret\n}\n")


def test_syntax_error_position():
    with pytest.raises(IRSyntaxError) as err:
        parse_program("global @g : int = \n")
    assert err.value.line == 1


def test_global_line_exact():
    p = parse_program("global @g : int = 7\n")
    assert print_program(p) == "global @g : int = 7\n"


@pytest.mark.parametrize("prog", corpus.programs(), ids=lambda p: p.name)
def test_corpus_round_trip(prog):
    p = prog.load()
    text = print_program(p)
    q = parse_program(text)
    assert q == p
    assert print_program(q) == text


@pytest.mark.parametrize("prog", corpus.programs(), ids=lambda p: p.name)
def test_corpus_validates(prog):
    assert validate(prog.load(), require_main=True) == []


def test_missing_terminator_names_block():
    diags = validate(parse_program("fn @f() -> int {\nentry:\n  %a = add 1, 2\n}\n"))
    assert len(diags) == 1
    assert "entry" in diags[0].where


def test_use_before_def_names_inst():
    p = parse_program("fn @f() -> int {\nentry:\n  %b = add %a, 1\n  %a = const 1\n  ret %b\n}\n")
    diags = validate(p)
    assert len(diags) == 1 and diags[0].inst == 1


def test_use_on_one_path_only():
    text = """fn @f(%c: int) -> int {
entry:
  cbr %c, a, b
a:
  %x = const 1
  br join
b:
  br join
join:
  ret %x
}
"""
    assert any("before assignment" in d.message for d in validate(parse_program(text)))


def test_const_div_by_zero_rejected():
    p = parse_program("fn @f() -> int {\nentry:\n  %a = div 4, 0\n  ret %a\n}\n")
    assert len(validate(p)) == 1


def test_div_by_zero_register_is_runtime_matter():
    p = parse_program("fn @f(%x: int) -> int {\nentry:\n  %a = div 4, %x\n  ret %a\n}\n")
    assert validate(p) == []


def test_type_errors():
    bad = [
        "global @g : int = \"x\"\n",
        "fn @f() {\nentry:\n  %p = alloca int\n  store \"s\", %p\n  ret\n}\n",
        "fn @f() -> int {\nentry:\n  ret\n}\n",
        "struct S { struct S }\n",
    ]
    for text in bad:
        assert validate(parse_program(text)), text


def test_main_presence_and_signature():
    lib = parse_program("fn @f() -> int {\nentry:\n  ret 0\n}\n")
    assert validate(lib) == []
    assert validate(lib, require_main=True)
    bad = parse_program("fn @main() -> int {\nentry:\n  ret 0\n}\n")
    assert any("main" in d.message for d in validate(bad))


def test_entry_with_predecessor_rejected():
    p = parse_program("fn @f() {\nentry:\n  br entry\n}\n")
    assert validate(p)


def test_terminator_in_middle_rejected():
    p = parse_program("fn @f() {\nentry:\n  ret\n  ret\n}\n")
    assert validate(p)


def test_ids_in_source_order(wc):
    ids = [i.id for _, _, i in wc.instructions()]
    assert ids == list(range(1, len(ids) + 1))
    assert wc.next_id == len(ids) + 1


def test_insert_neck_marker(wc):
    main = wc.function("main")
    target = main.block("read_pre").insts[0]
    necked = insert_neck_marker(wc, target.id)
    blk = necked.function("main").block("read_pre")
    assert blk.insts[0].op == "neckmark"
    assert blk.insts[0].id == wc.next_id
    assert blk.insts[1].id == target.id
    before = {i.id for _, _, i in wc.instructions()}
    after = {i.id for _, _, i in necked.instructions()}
    assert after - before == {wc.next_id}


def test_insert_neck_errors(wc):
    with pytest.raises(UnknownInstId):
        insert_neck_marker(wc, 10_000)
    necked = insert_neck_marker(wc, 1)
    with pytest.raises(DuplicateNeck):
        insert_neck_marker(necked, 2)


def test_string_escapes_round_trip():
    p = parse_program('global @s : arr<byte, 8> = "a\\n\\t\\"\\\\\\x01"\n')
    assert p.global_def("s").init == StrVal(b'a\n\t"\\\x01')
    assert parse_program(print_program(p)) == p


def test_layout_sizes():
    p = parse_program("struct S { byte, int, arr<int, 3> }\n")
    assert size_of(parse_type("struct S"), p) == 5
    assert size_of(Arr(Ptr(INT), 4), p) == 4


names = st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(names, st.integers(-2**63, 2**63 - 1)), unique_by=lambda t: t[0], max_size=6))
def test_global_round_trip_property(items):
    text = "".join(f"global @{n} : int = {v}\n" for n, v in items)
    p = parse_program(text)
    assert [g for g in p.globals] == [GlobalDef(n, INT, IntVal(v)) for n, v in items]
    assert print_program(p) == text


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=20), st.integers(0, 255))
def test_const_round_trip_property(data, b):
    p = parse_program(f"global @s : arr<byte, {len(data) + 1}> = {StrVal(data)}\n"
                      f"global @b : byte = {ByteVal(b)}\n")
    assert p.global_def("s").init == StrVal(data)
    assert parse_program(print_program(p)) == p
