"""Line-oriented parser for the textual IR.

See ``docs/ir-grammar.md`` for the grammar.  Instruction ids are assigned in
source order, starting at 1.
"""

from __future__ import annotations

import re
from typing import Optional

from .model import (
    BYTE, INT, INTRINSICS, OPCODES, STR, Arr, BasicBlock, ByteVal, FuncRef,
    Function, GlobalDef, GlobalRef, Instruction, IntVal, IRError, Label, NullPtr,
    Program, Ptr, Reg, StrVal, StructDef, StructRef, TypeExpr,
)


class IRSyntaxError(IRError):
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.message = message


class ResolutionError(IRError):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"{line}: {message}" if line else message)
        self.line = line


_TOKEN = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<reg>%[A-Za-z0-9_.]+)
  | (?P<sym>@[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<byte>\d+b\b)
  | (?P<int>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<arrow>->)
  | (?P<punct>[{}(),:=<>])
""", re.VERBOSE)

_STR_ESCAPES = {"n": 10, "t": 9, "\\": 92, '"': 34, "0": 0}

_INT_MIN, _INT_MAX = -(2 ** 63), 2 ** 63 - 1


def _strip_comment(line: str) -> str:
    in_str = False
    i = 0
    while i < len(line):
        c = line[i]
        if in_str:
            if c == "\\":
                i += 1
            elif c == '"':
                in_str = False
        elif c == '"':
            in_str = True
        elif c == "#":
            return line[:i]
        i += 1
    return line


def _decode_string(tok: str, lineno: int, col: int) -> bytes:
    body = tok[1:-1]
    out = bytearray()
    i = 0
    while i < len(body):
        c = body[i]
        if c != "\\":
            out.extend(c.encode("utf-8"))
            i += 1
            continue
        nxt = body[i + 1]
        if nxt in _STR_ESCAPES:
            out.append(_STR_ESCAPES[nxt])
            i += 2
        elif nxt == "x":
            try:
                out.append(int(body[i + 2:i + 4], 16))
            except ValueError:
                raise IRSyntaxError(lineno, col, "bad \\x escape") from None
            i += 4
        else:
            raise IRSyntaxError(lineno, col, f"unknown escape \\{nxt}")
    return bytes(out)


class _Line:
    """Token cursor over one source line."""

    def __init__(self, text: str, lineno: int):
        self.lineno = lineno
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                raise IRSyntaxError(lineno, pos + 1, f"unexpected character {text[pos]!r}")
            kind = m.lastgroup
            if kind != "ws":
                self.toks.append((kind, m.group(), pos + 1))
            pos = m.end()
        self.i = 0

    def peek(self) -> Optional[tuple[str, str, int]]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def col(self) -> int:
        tok = self.peek()
        return tok[2] if tok else (self.toks[-1][2] + len(self.toks[-1][1]) if self.toks else 1)

    def error(self, msg: str) -> IRSyntaxError:
        return IRSyntaxError(self.lineno, self.col(), msg)

    def next(self, kind: Optional[str] = None, value: Optional[str] = None) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise self.error(f"expected {value or kind}, got end of line")
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            raise self.error(f"expected {value or kind}, got {tok[1]!r}")
        self.i += 1
        return tok

    def accept(self, value: str) -> bool:
        tok = self.peek()
        if tok and tok[1] == value:
            self.i += 1
            return True
        return False

    def at_end(self) -> bool:
        return self.i >= len(self.toks)

    def expect_end(self) -> None:
        if not self.at_end():
            raise self.error(f"unexpected trailing {self.peek()[1]!r}")

    # -- grammar pieces --

    def type(self) -> TypeExpr:
        kind, val, _ = self.next("ident")
        if val == "int":
            return INT
        if val == "byte":
            return BYTE
        if val == "str":
            return STR
        if val == "ptr":
            self.next(value="<")
            inner = self.type()
            self.next(value=">")
            return Ptr(inner)
        if val == "arr":
            self.next(value="<")
            elem = self.type()
            self.next(value=",")
            n = int(self.next("int")[1])
            self.next(value=">")
            if n < 1:
                raise IRSyntaxError(self.lineno, self.col(), "array length must be >= 1")
            return Arr(elem, n)
        if val == "struct":
            return StructRef(self.next("ident")[1])
        raise IRSyntaxError(self.lineno, self.col(), f"unknown type {val!r}")

    def const(self):
        kind, val, col = self.next()
        if kind == "int":
            n = int(val)
            if not _INT_MIN <= n <= _INT_MAX:
                raise IRSyntaxError(self.lineno, col, "integer out of 64-bit range")
            return IntVal(n)
        if kind == "byte":
            n = int(val[:-1])
            if n > 255:
                raise IRSyntaxError(self.lineno, col, "byte literal out of range")
            return ByteVal(n)
        if kind == "str":
            return StrVal(_decode_string(val, self.lineno, col))
        if kind == "ident" and val == "null":
            return NullPtr()
        raise IRSyntaxError(self.lineno, col, f"expected constant, got {val!r}")

    def operand(self, func_ref: bool = False, label: bool = False):
        tok = self.peek()
        if tok is None:
            raise self.error("expected operand")
        kind, val, col = tok
        if kind == "reg":
            self.i += 1
            return Reg(val[1:])
        if kind == "sym":
            self.i += 1
            return FuncRef(val[1:]) if func_ref else GlobalRef(val[1:])
        if kind == "ident" and val != "null":
            if not label:
                raise IRSyntaxError(self.lineno, col, f"label {val!r} not allowed here")
            self.i += 1
            return Label(val)
        return self.const()


_LABEL_POSITIONS = {"br": (0,), "cbr": (1, 2)}


def _parse_instruction(ln: _Line) -> Instruction:
    result = None
    tok = ln.peek()
    if tok[0] == "reg":
        result = ln.next()[1][1:]
        ln.next(value="=")
    op_tok = ln.next("ident")
    op = op_tok[1]
    if op not in OPCODES:
        raise IRSyntaxError(ln.lineno, op_tok[2], f"unknown opcode {op!r}")
    if op in ("alloca", "heap"):
        ty = ln.type()
        ln.expect_end()
        return Instruction(op, (), result, ty)
    operands = []
    label_pos = _LABEL_POSITIONS.get(op, ())
    if not ln.at_end():
        while True:
            idx = len(operands)
            fref = op in ("call", "funcaddr") and idx == 0
            operands.append(ln.operand(func_ref=fref, label=idx in label_pos))
            if not ln.accept(","):
                break
    ln.expect_end()
    return Instruction(op, tuple(operands), result)


def parse_program(text: str) -> Program:
    """Parse IR source text into a :class:`Program`.

    Raises :class:`IRSyntaxError` for malformed text and
    :class:`ResolutionError` for references to unknown labels, globals,
    structs, or functions.
    """
    structs: list[StructDef] = []
    globals_: list[GlobalDef] = []
    funcs: list[Function] = []
    # where each entity was defined / referenced, for error lines
    refs: list[tuple[str, str, int]] = []
    next_id = 1

    cur_fn = None  # (name, params, ret, lineno)
    blocks: list[BasicBlock] = []
    cur_label: Optional[str] = None
    cur_insts: list[Instruction] = []
    label_refs: list[tuple[str, int]] = []

    def close_block():
        nonlocal cur_label, cur_insts
        if cur_label is not None:
            blocks.append(BasicBlock(cur_label, tuple(cur_insts)))
        cur_label, cur_insts = None, []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(raw).strip()
        if not stripped:
            continue
        ln = _Line(stripped, lineno)
        first = ln.peek()

        if cur_fn is not None:
            if first[1] == "}" and len(ln.toks) == 1:
                close_block()
                name, params, ret, fline = cur_fn
                if not blocks:
                    raise IRSyntaxError(fline, 1, f"function @{name} has no blocks")
                labels = [b.label for b in blocks]
                dup = {x for x in labels if labels.count(x) > 1}
                if dup:
                    raise IRSyntaxError(fline, 1, f"duplicate block label {sorted(dup)[0]!r} in @{name}")
                for lab, lline in label_refs:
                    if lab not in labels:
                        raise ResolutionError(f"unknown label {lab!r} in @{name}", lline)
                funcs.append(Function(name, params, ret, tuple(blocks)))
                cur_fn, blocks, label_refs = None, [], []
                continue
            if first[0] == "ident" and len(ln.toks) == 2 and ln.toks[1][1] == ":":
                close_block()
                cur_label = first[1]
                continue
            if cur_label is None:
                raise IRSyntaxError(lineno, first[2], "instruction outside of a block")
            inst = _parse_instruction(ln)
            inst = Instruction(inst.op, inst.operands, inst.result, inst.type, next_id)
            next_id += 1
            cur_insts.append(inst)
            for o in inst.operands:
                if isinstance(o, Label):
                    label_refs.append((o.name, lineno))
                elif isinstance(o, GlobalRef):
                    refs.append(("global", o.name, lineno))
                elif isinstance(o, FuncRef):
                    refs.append(("function", o.name, lineno))
            if inst.type is not None:
                _collect_struct_refs(inst.type, refs, lineno)
            continue

        kw = ln.next("ident")[1]
        if kw == "struct":
            name = ln.next("ident")[1]
            ln.next(value="{")
            fields = [ln.type()]
            while ln.accept(","):
                fields.append(ln.type())
            ln.next(value="}")
            ln.expect_end()
            for ft in fields:
                _collect_struct_refs(ft, refs, lineno)
            structs.append(StructDef(name, tuple(fields)))
        elif kw == "global":
            name = ln.next("sym")[1][1:]
            ln.next(value=":")
            ty = ln.type()
            ln.next(value="=")
            init = ln.const()
            ln.expect_end()
            _collect_struct_refs(ty, refs, lineno)
            globals_.append(GlobalDef(name, ty, init))
        elif kw == "fn":
            name = ln.next("sym")[1][1:]
            ln.next(value="(")
            params = []
            if not ln.accept(")"):
                while True:
                    pname = ln.next("reg")[1][1:]
                    ln.next(value=":")
                    pty = ln.type()
                    _collect_struct_refs(pty, refs, lineno)
                    params.append((pname, pty))
                    if ln.accept(")"):
                        break
                    ln.next(value=",")
            ret = None
            if ln.accept("->"):
                ret = ln.type()
                _collect_struct_refs(ret, refs, lineno)
            ln.next(value="{")
            ln.expect_end()
            cur_fn = (name, tuple(params), ret, lineno)
        else:
            raise IRSyntaxError(lineno, first[2], f"expected struct, global or fn, got {kw!r}")

    if cur_fn is not None:
        raise IRSyntaxError(cur_fn[3], 1, f"unterminated function @{cur_fn[0]}")

    struct_names = {s.name for s in structs}
    global_names = {g.name for g in globals_}
    func_names = {f.name for f in funcs}
    for kind, name, lineno in refs:
        if kind == "struct" and name not in struct_names:
            raise ResolutionError(f"unknown struct {name!r}", lineno)
        if kind == "global" and name not in global_names:
            raise ResolutionError(f"unknown global @{name}", lineno)
        if kind == "function" and name not in func_names and name not in INTRINSICS:
            raise ResolutionError(f"unknown function @{name}", lineno)

    return Program(tuple(structs), tuple(globals_), tuple(funcs), next_id)


def _collect_struct_refs(t: TypeExpr, refs: list, lineno: int) -> None:
    while isinstance(t, (Ptr, Arr)):
        t = t.pointee if isinstance(t, Ptr) else t.elem
    if isinstance(t, StructRef):
        refs.append(("struct", t.name, lineno))


def parse_type(text: str) -> TypeExpr:
    ln = _Line(text.strip(), 1)
    t = ln.type()
    ln.expect_end()
    return t
