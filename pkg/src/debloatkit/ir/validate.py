"""Static checks and register type inference for IR programs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import (
    BINARY_OPS, BYTE, COMPARE_OPS, INT, INTRINSICS, STR, Arr, Byte, ByteVal,
    FuncRef, Function, GlobalRef, Instruction, Int, IntVal, Label, NullPtr,
    Program, Ptr, Reg, Str, StrVal, StructRef, TypeExpr, is_pointerish,
    is_scalar,
)


class _NullType:
    """Type of the ``null`` literal; compatible with every pointer."""

    def __str__(self) -> str:
        return "null"


NULL_T = _NullType()

_VALUE_OPS = BINARY_OPS | COMPARE_OPS | {
    "const", "alloca", "heap", "load", "field", "index", "funcaddr"}
_NO_RESULT_OPS = {"store", "br", "cbr", "ret", "neckmark"}


@dataclass(frozen=True)
class Diagnostic:
    where: str
    message: str
    inst: Optional[int] = None

    def __str__(self) -> str:
        loc = f"{self.where} (inst {self.inst})" if self.inst is not None else self.where
        return f"{loc}: {self.message}"


def compatible(want, got) -> bool:
    if want == got:
        return True
    if got is NULL_T:
        return is_pointerish(want)
    if want is NULL_T:
        return is_pointerish(got)
    pair = {type(want), type(got)}
    if pair == {Str, Ptr}:
        ptr = want if isinstance(want, Ptr) else got
        return ptr.pointee == BYTE
    return False


def _is_num(t) -> bool:
    return isinstance(t, (Int, Byte))


def _const_type(c):
    if isinstance(c, IntVal):
        return INT
    if isinstance(c, ByteVal):
        return BYTE
    if isinstance(c, StrVal):
        return STR
    if isinstance(c, NullPtr):
        return NULL_T
    return None


class _FunctionChecker:
    def __init__(self, prog: Program, fn: Function, diags: list[Diagnostic]):
        self.prog = prog
        self.fn = fn
        self.diags = diags
        self.defs: dict[str, Instruction] = {}
        self.types: dict[str, object] = {name: ty for name, ty in fn.params}
        self._busy: set[str] = set()
        self.structs = {s.name: s for s in prog.structs}
        self.globals = {g.name: g for g in prog.globals}
        self.funcs = {f.name: f for f in prog.functions}

    def err(self, msg: str, inst: Optional[Instruction] = None) -> None:
        self.diags.append(Diagnostic(f"@{self.fn.name}", msg, inst.id if inst else None))

    def type_ok(self, t: TypeExpr) -> bool:
        while isinstance(t, (Ptr, Arr)):
            t = t.pointee if isinstance(t, Ptr) else t.elem
        return not isinstance(t, StructRef) or t.name in self.structs

    def operand_type(self, o, inst: Instruction):
        if isinstance(o, Reg):
            return self.reg_type(o.name, inst)
        if isinstance(o, GlobalRef):
            g = self.globals.get(o.name)
            if g is None:
                self.err(f"unknown global @{o.name}", inst)
                return None
            return Ptr(g.type)
        if isinstance(o, (FuncRef, Label)):
            self.err(f"operand {o} not allowed here", inst)
            return None
        return _const_type(o)

    def reg_type(self, name: str, user: Instruction):
        if name in self.types:
            return self.types[name]
        inst = self.defs.get(name)
        if inst is None:
            self.err(f"use of undefined register %{name}", user)
            return None
        if name in self._busy:
            self.err(f"cyclic definition of %{name}", user)
            return None
        self._busy.add(name)
        t = self.infer(inst)
        self._busy.discard(name)
        self.types[name] = t
        return t

    def infer(self, inst: Instruction):
        """Type of the value ``inst`` defines (None if ill-typed)."""
        op, ops = inst.op, inst.operands
        if op == "const":
            if len(ops) != 1 or _const_type(ops[0]) is None:
                self.err("const takes one literal operand", inst)
                return None
            return _const_type(ops[0])
        if op in BINARY_OPS or op in COMPARE_OPS:
            if len(ops) != 2:
                self.err(f"{op} takes two operands", inst)
                return None
            a, b = (self.operand_type(o, inst) for o in ops)
            if a is None or b is None:
                return None
            if _is_num(a) and _is_num(b):
                return INT
            if op in ("eq", "ne") and compatible(a, b) and (is_pointerish(a) or a is NULL_T):
                return INT
            self.err(f"{op} on incompatible types {a}, {b}", inst)
            return None
        if op in ("alloca", "heap"):
            if inst.type is None or not self.type_ok(inst.type):
                self.err(f"{op} needs a resolvable type", inst)
                return None
            return Ptr(inst.type)
        if op == "load":
            if len(ops) != 1:
                self.err("load takes one operand", inst)
                return None
            p = self.operand_type(ops[0], inst)
            if isinstance(p, Str):
                return BYTE
            if isinstance(p, Ptr) and is_scalar(p.pointee):
                return p.pointee
            if p is not None:
                self.err(f"load from non-scalar pointer type {p}", inst)
            return None
        if op == "field":
            if len(ops) != 2 or not isinstance(ops[1], IntVal):
                self.err("field takes a base and a literal index", inst)
                return None
            base = self.operand_type(ops[0], inst)
            if not (isinstance(base, Ptr) and isinstance(base.pointee, StructRef)):
                if base is not None:
                    self.err(f"field base must be ptr<struct>, got {base}", inst)
                return None
            sd = self.structs.get(base.pointee.name)
            if sd is None:
                return None
            k = ops[1].value
            if not 0 <= k < len(sd.fields):
                self.err(f"field index {k} out of range for struct {sd.name}", inst)
                return None
            return Ptr(sd.fields[k])
        if op == "index":
            if len(ops) != 2:
                self.err("index takes two operands", inst)
                return None
            base = self.operand_type(ops[0], inst)
            idx = self.operand_type(ops[1], inst)
            if idx is not None and not _is_num(idx):
                self.err("index offset must be int or byte", inst)
            if isinstance(base, Str):
                return Ptr(BYTE)
            if isinstance(base, Ptr):
                if isinstance(base.pointee, Arr):
                    return Ptr(base.pointee.elem)
                return base
            if base is not None:
                self.err(f"index base must be a pointer, got {base}", inst)
            return None
        if op == "funcaddr":
            if len(ops) != 1 or not isinstance(ops[0], FuncRef) or ops[0].name not in self.funcs:
                self.err("funcaddr takes a user function", inst)
                return None
            return Ptr(BYTE)
        if op == "call":
            return self.check_call(inst)
        if op == "icall":
            return self.check_icall(inst)
        return None

    def check_call(self, inst: Instruction):
        ops = inst.operands
        if not ops or not isinstance(ops[0], FuncRef):
            self.err("call needs a function operand", inst)
            return None
        name = ops[0].name
        if name in self.funcs:
            f = self.funcs[name]
            ptypes, ret = tuple(t for _, t in f.params), f.ret
        elif name in INTRINSICS:
            ptypes, ret = INTRINSICS[name]
        else:
            self.err(f"unknown function @{name}", inst)
            return None
        args = ops[1:]
        if len(args) != len(ptypes):
            self.err(f"@{name} expects {len(ptypes)} arguments, got {len(args)}", inst)
        else:
            for want, a in zip(ptypes, args):
                got = self.operand_type(a, inst)
                if got is not None and not compatible(want, got):
                    self.err(f"argument of type {got} passed to @{name} where {want} expected", inst)
        if inst.result is not None and ret is None:
            self.err(f"@{name} returns no value", inst)
        return ret

    def check_icall(self, inst: Instruction):
        ops = inst.operands
        if not ops:
            self.err("icall needs a function pointer", inst)
            return None
        fp = self.operand_type(ops[0], inst)
        if fp is not None and not compatible(Ptr(BYTE), fp):
            self.err(f"icall target must be ptr<byte>, got {fp}", inst)
        for a in ops[1:]:
            self.operand_type(a, inst)
        return INT

    def check_terminator(self, inst: Instruction) -> None:
        ops = inst.operands
        if inst.op == "br":
            if len(ops) != 1 or not isinstance(ops[0], Label):
                self.err("br takes one label", inst)
        elif inst.op == "cbr":
            if len(ops) != 3 or not all(isinstance(o, Label) for o in ops[1:]):
                self.err("cbr takes a condition and two labels", inst)
                return
            c = self.operand_type(ops[0], inst)
            if c is not None and not _is_num(c):
                self.err(f"cbr condition must be int or byte, got {c}", inst)
        elif inst.op == "ret":
            if self.fn.ret is None:
                if ops:
                    self.err("ret with a value in a function without return type", inst)
            elif len(ops) != 1:
                self.err("ret must return a value", inst)
            else:
                got = self.operand_type(ops[0], inst)
                if got is not None and not compatible(self.fn.ret, got):
                    self.err(f"ret of {got} where {self.fn.ret} expected", inst)

    def check_store(self, inst: Instruction) -> None:
        ops = inst.operands
        if len(ops) != 2:
            self.err("store takes a value and an address", inst)
            return
        v = self.operand_type(ops[0], inst)
        p = self.operand_type(ops[1], inst)
        if p is None or v is None:
            return
        if not (isinstance(p, Ptr) and is_scalar(p.pointee)):
            self.err(f"store through non-scalar pointer type {p}", inst)
        elif not compatible(p.pointee, v):
            self.err(f"store of {v} into {p.pointee}", inst)

    def run(self) -> dict[str, object]:
        fn = self.fn
        names = [n for n, _ in fn.params]
        if len(set(names)) != len(names):
            self.err("duplicate parameter name")
        for _, t in fn.params:
            if not self.type_ok(t):
                self.err(f"unknown type {t}")
        labels = [b.label for b in fn.blocks]
        if len(set(labels)) != len(labels):
            self.err("duplicate block labels")
        label_set = set(labels)

        for b in fn.blocks:
            if not b.insts or not b.insts[-1].is_terminator:
                self.diags.append(Diagnostic(f"@{fn.name}:{b.label}", "block does not end with a terminator"))
            for i, inst in enumerate(b.insts):
                if inst.is_terminator and i != len(b.insts) - 1:
                    self.err(f"terminator {inst.op} in the middle of block {b.label}", inst)
                for lab in inst.labels():
                    if lab not in label_set:
                        self.err(f"unknown label {lab}", inst)
                if inst.result is not None:
                    if inst.op in _NO_RESULT_OPS:
                        self.err(f"{inst.op} cannot define a register", inst)
                    elif inst.result in self.defs or inst.result in names:
                        self.err(f"register %{inst.result} assigned more than once", inst)
                    else:
                        self.defs[inst.result] = inst
                elif inst.op in _VALUE_OPS:
                    self.err(f"{inst.op} must define a register", inst)
                if inst.op == "div" and len(inst.operands) == 2:
                    a, d = inst.operands
                    if isinstance(a, (IntVal, ByteVal)) and isinstance(d, (IntVal, ByteVal)) and d.value == 0:
                        self.err("division of constants by zero", inst)
                if inst.op == "neckmark" and inst.operands:
                    self.err("neckmark takes no operands", inst)

        for b in fn.blocks:
            for inst in b.insts:
                if inst.result is not None and inst.result in self.defs and self.defs[inst.result] is inst:
                    self.reg_type(inst.result, inst)
                elif inst.op == "store":
                    self.check_store(inst)
                elif inst.is_terminator:
                    self.check_terminator(inst)
                elif inst.op == "call":
                    self.check_call(inst)
                elif inst.op == "icall":
                    self.check_icall(inst)
        self.check_dominance(label_set)
        return self.types

    def check_dominance(self, label_set: set[str]) -> None:
        from ..analysis import build_cfg, dominators

        fn = self.fn
        if any(lab not in label_set for b in fn.blocks for lab in b.successors()):
            return
        cfg = build_cfg(fn)
        if cfg.preds[fn.entry]:
            self.diags.append(Diagnostic(f"@{fn.name}:{fn.entry}", "entry block has predecessors"))
        dom = dominators(cfg)
        def_block: dict[str, tuple[str, int]] = {}
        for b in fn.blocks:
            for i, inst in enumerate(b.insts):
                if inst.result is not None:
                    def_block.setdefault(inst.result, (b.label, i))
        params = {n for n, _ in fn.params}
        for b in fn.blocks:
            if b.label not in dom.idom:
                continue  # unreachable: no path can use the value
            for i, inst in enumerate(b.insts):
                for r in inst.regs_used():
                    if r in params or r not in def_block:
                        continue
                    dblock, di = def_block[r]
                    ok = di < i if dblock == b.label else dom.dominates(dblock, b.label)
                    if not ok:
                        self.err(f"register %{r} may be used before assignment", inst)


def _struct_cycles(prog: Program, diags: list[Diagnostic]) -> None:
    structs = {s.name: s for s in prog.structs}

    def contained(t):
        while isinstance(t, Arr):
            t = t.elem
        return t.name if isinstance(t, StructRef) else None

    state: dict[str, int] = {}

    def visit(name: str) -> bool:
        if state.get(name) == 1:
            return True
        if state.get(name) == 2 or name not in structs:
            return False
        state[name] = 1
        for ft in structs[name].fields:
            inner = contained(ft)
            if inner and visit(inner):
                return True
        state[name] = 2
        return False

    for s in prog.structs:
        if visit(s.name):
            diags.append(Diagnostic(f"struct {s.name}", "recursive by-value containment"))
            return


def _global_init_ok(t: TypeExpr, init) -> bool:
    if isinstance(t, Int):
        return isinstance(init, IntVal)
    if isinstance(t, Byte):
        return isinstance(init, ByteVal)
    if isinstance(t, Str):
        return isinstance(init, StrVal)
    if isinstance(t, Ptr):
        return isinstance(init, NullPtr) or (isinstance(init, StrVal) and t.pointee == BYTE)
    if isinstance(t, Arr) and isinstance(init, StrVal):
        return t.elem == BYTE and len(init.data) + 1 <= t.length
    # aggregates: literal 0 zero-fills
    return isinstance(init, IntVal) and init.value == 0


def validate(p: Program, require_main: bool = False) -> list[Diagnostic]:
    """Return diagnostics for ``p``; an empty list means the program is valid."""
    diags: list[Diagnostic] = []

    seen: set[str] = set()
    for s in p.structs:
        if s.name in seen:
            diags.append(Diagnostic(f"struct {s.name}", "duplicate struct"))
        seen.add(s.name)
        if not s.fields:
            diags.append(Diagnostic(f"struct {s.name}", "struct has no fields"))
    _struct_cycles(p, diags)
    struct_names = {s.name for s in p.structs}

    def type_ok(t):
        while isinstance(t, (Ptr, Arr)):
            if isinstance(t, Arr) and t.length < 1:
                return False
            t = t.pointee if isinstance(t, Ptr) else t.elem
        return not isinstance(t, StructRef) or t.name in struct_names

    gseen: set[str] = set()
    for g in p.globals:
        if g.name in gseen:
            diags.append(Diagnostic(f"@{g.name}", "duplicate global"))
        gseen.add(g.name)
        if not type_ok(g.type):
            diags.append(Diagnostic(f"@{g.name}", f"bad type {g.type}"))
        elif not _global_init_ok(g.type, g.init):
            diags.append(Diagnostic(f"@{g.name}", f"initializer {g.init} does not match {g.type}"))

    fseen: set[str] = set()
    for f in p.functions:
        if f.name in fseen:
            diags.append(Diagnostic(f"@{f.name}", "duplicate function"))
        if f.name in INTRINSICS:
            diags.append(Diagnostic(f"@{f.name}", "function shadows an intrinsic"))
        fseen.add(f.name)
        if not f.blocks:
            diags.append(Diagnostic(f"@{f.name}", "function has no blocks"))
            continue
        _FunctionChecker(p, f, diags).run()

    mains = [f for f in p.functions if f.name == "main"]
    if require_main and len(mains) != 1:
        diags.append(Diagnostic("program", "expected exactly one @main"))
    for m in mains:
        sig = tuple(t for _, t in m.params)
        if sig != (INT, Ptr(Ptr(BYTE))):
            diags.append(Diagnostic("@main", "main must take (int, ptr<ptr<byte>>)"))
    return diags


def register_types(p: Program, fn: Function) -> dict[str, object]:
    """Infer the type of every register in ``fn`` (assumes ``p`` validates)."""
    return _FunctionChecker(p, fn, []).run()
