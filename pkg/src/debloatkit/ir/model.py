"""Data model for the load/store IR.

Every value here is a frozen dataclass built from tuples, so a ``Program`` can
be shared freely between passes.  Instruction ids are excluded from equality:
two programs compare equal when they have the same structure, regardless of
how their instructions were numbered.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union


# -- types -----------------------------------------------------------------

@dataclass(frozen=True)
class Int:
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class Byte:
    def __str__(self) -> str:
        return "byte"


@dataclass(frozen=True)
class Str:
    def __str__(self) -> str:
        return "str"


@dataclass(frozen=True)
class Ptr:
    pointee: "TypeExpr"

    def __str__(self) -> str:
        return f"ptr<{self.pointee}>"


@dataclass(frozen=True)
class Arr:
    elem: "TypeExpr"
    length: int

    def __str__(self) -> str:
        return f"arr<{self.elem}, {self.length}>"


@dataclass(frozen=True)
class StructRef:
    name: str

    def __str__(self) -> str:
        return f"struct {self.name}"


TypeExpr = Union[Int, Byte, Str, Ptr, Arr, StructRef]

INT = Int()
BYTE = Byte()
STR = Str()


def is_scalar(t: TypeExpr) -> bool:
    return isinstance(t, (Int, Byte, Str, Ptr))


def is_pointerish(t: TypeExpr) -> bool:
    return isinstance(t, (Ptr, Str))


# -- constants -------------------------------------------------------------

@dataclass(frozen=True)
class IntVal:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class ByteVal:
    value: int

    def __str__(self) -> str:
        return f"{self.value}b"


_ESCAPES = {ord("\n"): "\\n", ord("\t"): "\\t", ord("\\"): "\\\\", ord('"'): '\\"'}


@dataclass(frozen=True)
class StrVal:
    data: bytes

    def __str__(self) -> str:
        out = []
        for b in self.data:
            if b in _ESCAPES:
                out.append(_ESCAPES[b])
            elif 0x20 <= b < 0x7F:
                out.append(chr(b))
            else:
                out.append(f"\\x{b:02x}")
        return '"' + "".join(out) + '"'


@dataclass(frozen=True)
class NullPtr:
    def __str__(self) -> str:
        return "null"


ConstValue = Union[IntVal, ByteVal, StrVal, NullPtr]
CONST_TYPES = (IntVal, ByteVal, StrVal, NullPtr)


# -- operands --------------------------------------------------------------

@dataclass(frozen=True)
class Reg:
    name: str

    def __str__(self) -> str:
        return f"%{self.name}"


@dataclass(frozen=True)
class GlobalRef:
    name: str

    def __str__(self) -> str:
        return f"@{self.name}"


@dataclass(frozen=True)
class FuncRef:
    name: str

    def __str__(self) -> str:
        return f"@{self.name}"


@dataclass(frozen=True)
class Label:
    name: str

    def __str__(self) -> str:
        return self.name


Operand = Union[Reg, GlobalRef, FuncRef, Label, IntVal, ByteVal, StrVal, NullPtr]


# -- instructions ----------------------------------------------------------

BINARY_OPS = frozenset({"add", "sub", "mul", "div"})
COMPARE_OPS = frozenset({"eq", "ne", "lt", "le", "gt", "ge"})
TERMINATORS = frozenset({"br", "cbr", "ret"})
OPCODES = frozenset(
    {"const", "alloca", "heap", "load", "store", "field", "index", "call",
     "icall", "funcaddr", "neckmark"}
) | BINARY_OPS | COMPARE_OPS | TERMINATORS

# name -> (parameter types, return type or None)
INTRINSICS: dict[str, tuple[tuple[TypeExpr, ...], Optional[TypeExpr]]] = {
    "print_int": ((INT,), None),
    "print_str": ((Ptr(BYTE),), None),
    "read_line": ((Ptr(BYTE), INT), INT),
    "read_cfg_line": ((Ptr(BYTE), INT), INT),
    "str_eq": ((Ptr(BYTE), Ptr(BYTE)), INT),
    "atoi": ((Ptr(BYTE),), INT),
}

# intrinsics that write through their first argument
WRITING_INTRINSICS = frozenset({"read_line", "read_cfg_line"})


@dataclass(frozen=True)
class Instruction:
    op: str
    operands: tuple = ()
    result: Optional[str] = None
    type: Optional[TypeExpr] = None  # alloca / heap element type
    id: int = field(default=0, compare=False)

    @property
    def is_terminator(self) -> bool:
        return self.op in TERMINATORS

    def regs_used(self) -> Iterator[str]:
        for o in self.operands:
            if isinstance(o, Reg):
                yield o.name

    def labels(self) -> tuple[str, ...]:
        return tuple(o.name for o in self.operands if isinstance(o, Label))

    def __str__(self) -> str:
        head = f"%{self.result} = {self.op}" if self.result else self.op
        if self.op in ("alloca", "heap"):
            return f"{head} {self.type}"
        if not self.operands:
            return head
        return head + " " + ", ".join(str(o) for o in self.operands)


@dataclass(frozen=True)
class BasicBlock:
    label: str
    insts: tuple[Instruction, ...]

    @property
    def terminator(self) -> Optional[Instruction]:
        if self.insts and self.insts[-1].is_terminator:
            return self.insts[-1]
        return None

    def successors(self) -> tuple[str, ...]:
        term = self.terminator
        if term is None:
            return ()
        seen: list[str] = []
        for lab in term.labels():
            if lab not in seen:
                seen.append(lab)
        return tuple(seen)


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[tuple[str, TypeExpr], ...]
    ret: Optional[TypeExpr]
    blocks: tuple[BasicBlock, ...]

    @property
    def entry(self) -> str:
        return self.blocks[0].label

    def block(self, label: str) -> BasicBlock:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def block_map(self) -> dict[str, BasicBlock]:
        return {b.label: b for b in self.blocks}

    def instructions(self) -> Iterator[Instruction]:
        for b in self.blocks:
            yield from b.insts


@dataclass(frozen=True)
class StructDef:
    name: str
    fields: tuple[TypeExpr, ...]


@dataclass(frozen=True)
class GlobalDef:
    name: str
    type: TypeExpr
    init: ConstValue


@dataclass(frozen=True)
class Program:
    structs: tuple[StructDef, ...] = ()
    globals: tuple[GlobalDef, ...] = ()
    functions: tuple[Function, ...] = ()
    next_id: int = field(default=1, compare=False)

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def has_function(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)

    def struct(self, name: str) -> StructDef:
        for s in self.structs:
            if s.name == name:
                return s
        raise KeyError(name)

    def global_def(self, name: str) -> GlobalDef:
        for g in self.globals:
            if g.name == name:
                return g
        raise KeyError(name)

    def instructions(self) -> Iterator[tuple[Function, BasicBlock, Instruction]]:
        for f in self.functions:
            for b in f.blocks:
                for inst in b.insts:
                    yield f, b, inst

    def locate(self, inst_id: int) -> Optional[tuple[Function, BasicBlock, int]]:
        """Return (function, block, index-in-block) for an instruction id."""
        for f in self.functions:
            for b in f.blocks:
                for i, inst in enumerate(b.insts):
                    if inst.id == inst_id:
                        return f, b, i
        return None

    def with_function(self, fn: Function) -> "Program":
        funcs = tuple(fn if f.name == fn.name else f for f in self.functions)
        return replace(self, functions=funcs)

    def neck_ids(self) -> list[int]:
        return [inst.id for _, _, inst in self.instructions() if inst.op == "neckmark"]


# -- layout ----------------------------------------------------------------
# Memory is cell-addressed: every scalar (int, byte, pointer, str) takes one
# cell, aggregates are laid out field by field.

def size_of(t: TypeExpr, prog: Program) -> int:
    if isinstance(t, Arr):
        return t.length * size_of(t.elem, prog)
    if isinstance(t, StructRef):
        return sum(size_of(ft, prog) for ft in prog.struct(t.name).fields)
    return 1


def field_offset(sname: str, index: int, prog: Program) -> int:
    fields = prog.struct(sname).fields
    return sum(size_of(ft, prog) for ft in fields[:index])


def scalar_cells(t: TypeExpr, prog: Program) -> list[TypeExpr]:
    """Flattened per-cell scalar types of ``t``."""
    if isinstance(t, Arr):
        return scalar_cells(t.elem, prog) * t.length
    if isinstance(t, StructRef):
        out: list[TypeExpr] = []
        for ft in prog.struct(t.name).fields:
            out.extend(scalar_cells(ft, prog))
        return out
    return [t]


class IRError(Exception):
    """Base class for IR-level failures."""


class UnknownInstId(IRError):
    pass


class DuplicateNeck(IRError):
    pass


def renumber(prog: Program) -> Program:
    """Assign ids in source order starting at 1."""
    counter = 1
    funcs = []
    for f in prog.functions:
        blocks = []
        for b in f.blocks:
            insts = []
            for inst in b.insts:
                insts.append(replace(inst, id=counter))
                counter += 1
            blocks.append(replace(b, insts=tuple(insts)))
        funcs.append(replace(f, blocks=tuple(blocks)))
    return replace(prog, functions=tuple(funcs), next_id=counter)


def insert_neck_marker(prog: Program, at: int) -> Program:
    """Insert a ``neckmark`` immediately before instruction ``at``."""
    if prog.neck_ids():
        raise DuplicateNeck("program already contains a neckmark")
    loc = prog.locate(at)
    if loc is None:
        raise UnknownInstId(f"no instruction with id {at}")
    fn, block, idx = loc
    mark = Instruction("neckmark", id=prog.next_id)
    new_block = replace(block, insts=block.insts[:idx] + (mark,) + block.insts[idx:])
    new_fn = replace(fn, blocks=tuple(new_block if b.label == block.label else b for b in fn.blocks))
    return replace(prog.with_function(new_fn), next_id=prog.next_id + 1)
