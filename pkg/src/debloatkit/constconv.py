"""Turn a captured partial state into constants in the program text.

Before the neck, loads of captured globals/stack slots become constants and
stores into captured pointees/struct fields/string variables store the
captured value.  After the neck, loads are converted only for locations that
nothing in the post-neck region can write.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .analysis import build_cfg, dominators, find_neck, loops, post_neck_blocks, post_neck_region
from .interp import (
    DEFAULT_STEP_BUDGET, CapturedVar, DerefPath, ElemPath, GlobalPath, PartialState, Path,
    SlotPath, const_to_json, run_to_neck,
)
from .ir.model import (
    BYTE, WRITING_INTRINSICS, Arr, Function, GlobalDef, GlobalRef, Instruction,
    IntVal, Program, Ptr, Reg, StrVal, StructRef,
)
from .ir.validate import compatible, register_types

REPLACE_LOAD = "ReplaceLoadWithConst"
REWRITE_STORE = "RewriteStoreSource"


class StateMismatch(Exception):
    pass


@dataclass(frozen=True)
class Rewrite:
    site: int
    action: str
    path: Path
    value: object

    def as_dict(self) -> dict:
        return {"site": self.site, "action": self.action, "path": str(self.path),
                "value": const_to_json(self.value)}


@dataclass
class ConversionPlan:
    pre_neck: list = field(default_factory=list)
    post_neck: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (path, reason)

    def __bool__(self) -> bool:
        return bool(self.pre_neck or self.post_neck)

    def as_dict(self) -> dict:
        return {
            "preNeck": [r.as_dict() for r in self.pre_neck],
            "postNeck": [r.as_dict() for r in self.post_neck],
            "skipped": [{"path": str(pth), "reason": why} for pth, why in self.skipped],
        }


def _obj_of_path(p: Path):
    while isinstance(p, ElemPath):
        p = p.base
    if isinstance(p, GlobalPath):
        return ("global", p.name)
    if isinstance(p, SlotPath):
        return ("slot", p.function, p.reg)
    return ("deref", p.base)


def _prefixes(p: Path) -> set:
    out = set()
    while True:
        out.add(p)
        if isinstance(p, (DerefPath, ElemPath)):
            p = p.base
        else:
            return out


class _Addresses:
    """Static address resolution inside one function."""

    def __init__(self, prog: Program, fn: Function):
        self.prog = prog
        self.fn = fn
        self.defs = {i.result: i for i in fn.instructions() if i.result is not None}
        self._types = None

    @property
    def types(self) -> dict:
        if self._types is None:
            self._types = register_types(self.prog, self.fn)
        return self._types

    def path(self, o) -> Optional[Path]:
        if isinstance(o, GlobalRef):
            return GlobalPath(o.name)
        if not isinstance(o, Reg):
            return None
        d = self.defs.get(o.name)
        if d is None:
            return None
        if d.op == "alloca":
            return SlotPath(self.fn.name, o.name)
        if d.op == "load":
            b = self.path(d.operands[0])
            return DerefPath(b) if b is not None else None
        if d.op == "field":
            b = self.path(d.operands[0])
            return ElemPath(b, d.operands[1].value) if b is not None else None
        return None

    def obj(self, o):
        """The object an address points into, when statically known."""
        if isinstance(o, GlobalRef):
            return ("global", o.name)
        if not isinstance(o, Reg):
            return None
        d = self.defs.get(o.name)
        if d is None:
            return None
        if d.op == "alloca":
            return ("slot", self.fn.name, o.name)
        if d.op == "load":
            b = self.path(d.operands[0])
            return ("deref", b) if b is not None else None
        if d.op in ("field", "index"):
            return self.obj(d.operands[0])
        return None

    def value_type(self, o):
        if isinstance(o, Reg):
            return self.types.get(o.name)
        if isinstance(o, GlobalRef):
            return Ptr(self.prog.global_def(o.name).type)
        return None


class _Escapes:
    """Which globals and stack slots have their address flow anywhere other
    than straight into a load/store address."""

    def __init__(self, prog: Program):
        self.escaped: set = set()
        for fn in prog.functions:
            users: dict[str, list] = {}
            for inst in fn.instructions():
                for k, o in enumerate(inst.operands):
                    if isinstance(o, Reg):
                        users.setdefault(o.name, []).append((inst, k))
            for inst in fn.instructions():
                if inst.op == "alloca" and self._reg_escapes(inst.result, users, set()):
                    self.escaped.add(("slot", fn.name, inst.result))
                for k, o in enumerate(inst.operands):
                    if isinstance(o, GlobalRef) and self._use_escapes(inst, k, users, set()):
                        self.escaped.add(("global", o.name))

    def _use_escapes(self, inst, k, users, seen) -> bool:
        if inst.op == "load" and k == 0:
            return False
        if inst.op == "store" and k == 1:
            return False
        if inst.op in ("field", "index") and k == 0:
            return self._reg_escapes(inst.result, users, seen)
        return True

    def _reg_escapes(self, reg, users, seen) -> bool:
        if reg in seen:
            return False
        seen.add(reg)
        return any(self._use_escapes(i, k, users, seen) for i, k in users.get(reg, ()))

    def __call__(self, obj) -> bool:
        return obj is None or obj[0] == "deref" or obj in self.escaped


class _Planner:
    def __init__(self, prog: Program, st: PartialState, neck: int):
        self.prog = prog
        self.st = st
        self.neck = neck
        self.region = post_neck_region(prog, neck)
        self.addr = {f.name: _Addresses(prog, f) for f in prog.functions}
        self.escapes = _Escapes(prog)
        self.neck_fn, self.after, _ = post_neck_blocks(prog, neck)
        g = build_cfg(self.neck_fn)
        self.cfg = g
        self.loops = loops(g, dominators(g))
        self.plan = ConversionPlan()
        self._used_sites: set = set()

    # location typing

    def path_type(self, p: Path):
        if isinstance(p, GlobalPath):
            if not any(g.name == p.name for g in self.prog.globals):
                raise StateMismatch(f"global @{p.name} not in program")
            return self.prog.global_def(p.name).type
        if isinstance(p, SlotPath):
            if not self.prog.has_function(p.function):
                raise StateMismatch(f"function @{p.function} not in program")
            for inst in self.prog.function(p.function).instructions():
                if inst.op == "alloca" and inst.result == p.reg:
                    return inst.type
            raise StateMismatch(f"no stack slot %{p.reg} in @{p.function}")
        if isinstance(p, DerefPath):
            t = self.path_type(p.base)
            if not isinstance(t, Ptr):
                raise StateMismatch(f"{p.base} is not a pointer")
            return t.pointee
        t = self.path_type(p.base)
        if not isinstance(t, StructRef) or p.index >= len(self.prog.struct(t.name).fields):
            raise StateMismatch(f"{p} does not name a struct element")
        return self.prog.struct(t.name).fields[p.index]

    # may an instruction write the location?

    def may_write(self, fn: Function, inst: Instruction, p: Path, ptype, through_calls: bool) -> bool:
        a = self.addr[fn.name]
        if inst.op == "store":
            return self._store_hits(a, inst.operands[1], a.value_type(inst.operands[0]), p, ptype)
        if inst.op == "call":
            callee = inst.operands[0].name
            if callee in WRITING_INTRINSICS:
                return self._store_hits(a, inst.operands[1], BYTE, p, ptype, whole_object=True)
            if self.prog.has_function(callee):
                return through_calls and self._reachable_by_callee(p)
            return False
        if inst.op == "icall":
            return through_calls and self._reachable_by_callee(p)
        return False

    def _reachable_by_callee(self, p: Path) -> bool:
        o = _obj_of_path(p)
        return o[0] == "global" or self.escapes(o)

    def _store_hits(self, a: _Addresses, addr, vtype, p: Path, ptype, whole_object=False) -> bool:
        ex = None if whole_object else a.path(addr)
        o = a.obj(addr)
        po = _obj_of_path(p)
        if ex is not None:
            if ex in _prefixes(p):
                return True
            if o == po or o[0] in ("global", "slot"):
                return False
        elif o is not None and o[0] in ("global", "slot"):
            return o == po
        # a store through a pointer we cannot pin down
        if not self.escapes(po):
            return False
        return vtype is None or compatible(ptype, vtype) or compatible(vtype, ptype)

    # planning

    def add(self, bucket: list, rw: Rewrite) -> None:
        if rw.site not in self._used_sites:
            self._used_sites.add(rw.site)
            bucket.append(rw)

    def _neck_fn_pre_insts(self):
        """(block label, index, inst) for neck-function instructions before the neck."""
        for b in self.neck_fn.blocks:
            for k, inst in enumerate(b.insts):
                if inst.id not in self.region:
                    yield b, k, inst

    def _overwritten_before_neck(self, block, k, p, ptype) -> bool:
        """Could a write to ``p`` run after position (block, k) and before the neck?"""
        fn = self.neck_fn
        later = list(block.insts[k + 1:])
        blocks = fn.block_map()
        for lab in self.cfg.reachable_from(block.label, include_start=False):
            later.extend(blocks[lab].insts)
        for inst in later:
            if inst.id in self.region:
                continue
            if self.may_write(fn, inst, p, ptype, through_calls=True):
                return True
        return False

    def run(self) -> ConversionPlan:
        for e in self.st.entries:
            ptype = self.path_type(e.path)
            is_str = isinstance(e.value, StrVal)
            if isinstance(e.path, (GlobalPath, SlotPath)) and not is_str:
                self._pre_loads(e, ptype)
            else:
                self._pre_stores(e, ptype)
            self._post(e, ptype)
        return self.plan

    def _pre_loads(self, e: CapturedVar, ptype) -> None:
        a = self.addr[self.neck_fn.name]
        for fn in self.prog.functions:
            if fn.name == self.neck_fn.name:
                continue
            fa = self.addr[fn.name]
            for inst in fn.instructions():
                if inst.id not in self.region and inst.op == "load" and fa.path(inst.operands[0]) == e.path:
                    self.plan.skipped.append((e.path, f"load {inst.id} is outside the neck function"))
        for block, k, inst in self._neck_fn_pre_insts():
            if inst.op != "load" or a.path(inst.operands[0]) != e.path:
                continue
            if self.loops.in_loop(block.label):
                self.plan.skipped.append((e.path, f"load {inst.id} is inside a loop"))
            elif self._overwritten_before_neck(block, k, e.path, ptype):
                self.plan.skipped.append((e.path, f"load {inst.id} may be overwritten before the neck"))
            else:
                self.add(self.plan.pre_neck, Rewrite(inst.id, REPLACE_LOAD, e.path, e.value))

    def _pre_stores(self, e: CapturedVar, ptype) -> None:
        stores = []
        for fn in self.prog.functions:
            a = self.addr[fn.name]
            for inst in fn.instructions():
                if inst.id in self.region or inst.op not in ("load", "store"):
                    continue
                target = inst.operands[0] if inst.op == "load" else inst.operands[1]
                if a.path(target) != e.path:
                    continue
                if inst.op == "load":
                    self.plan.skipped.append(
                        (e.path, f"read by load {inst.id} before the neck; stores left as is"))
                    return
                stores.append((fn, inst))
        for fn, inst in stores:
            if self._store_is_noop(fn, inst, e.value):
                continue
            self.add(self.plan.pre_neck, Rewrite(inst.id, REWRITE_STORE, e.path, e.value))

    def _store_is_noop(self, fn: Function, inst: Instruction, value) -> bool:
        src = inst.operands[0]
        if src == value:
            return True
        if isinstance(value, StrVal) and isinstance(src, Reg):
            d = self.addr[fn.name].defs.get(src.name)
            if d is not None and d.op == "index" and isinstance(d.operands[0], GlobalRef) \
                    and d.operands[1] == IntVal(0):
                g = self.prog.global_def(d.operands[0].name)
                return isinstance(g.type, Arr) and g.init == value
        return False

    def _post(self, e: CapturedVar, ptype) -> None:
        loads = []
        for fn in self.prog.functions:
            a = self.addr[fn.name]
            for inst in fn.instructions():
                if inst.id not in self.region:
                    continue
                if self.may_write(fn, inst, e.path, ptype, through_calls=False):
                    self.plan.skipped.append((e.path, f"written after the neck by {inst.id}"))
                    return
                if inst.op == "load" and a.path(inst.operands[0]) == e.path:
                    loads.append(inst)
        for inst in loads:
            self.add(self.plan.post_neck, Rewrite(inst.id, REPLACE_LOAD, e.path, e.value))


def plan_conversion(p: Program, st: PartialState, neck: Optional[int] = None) -> ConversionPlan:
    if neck is None:
        neck = find_neck(p)
    return _Planner(p, st, neck).run()


def apply_conversion(p: Program, plan: ConversionPlan) -> Program:
    rewrites = {r.site: r for r in plan.pre_neck + plan.post_neck}
    if not rewrites:
        return p
    next_id = p.next_id
    used_names = {g.name for g in p.globals}
    strings: dict[bytes, str] = {}
    new_globals: list[GlobalDef] = []

    def string_global(data: bytes) -> str:
        if data not in strings:
            k = 0
            while f"str{k}" in used_names:
                k += 1
            name = f"str{k}"
            used_names.add(name)
            strings[data] = name
            new_globals.append(GlobalDef(name, Arr(BYTE, len(data) + 1), StrVal(data)))
        return strings[data]

    funcs = []
    for fn in p.functions:
        blocks = []
        for b in fn.blocks:
            insts = []
            for inst in b.insts:
                rw = rewrites.get(inst.id)
                if rw is None:
                    insts.append(inst)
                    continue
                v = rw.value
                if rw.action == REPLACE_LOAD:
                    if isinstance(v, StrVal):
                        new = Instruction("index", (GlobalRef(string_global(v.data)), IntVal(0)),
                                          inst.result, id=next_id)
                    else:
                        new = Instruction("const", (v,), inst.result, id=next_id)
                    next_id += 1
                    insts.append(new)
                elif isinstance(v, StrVal):
                    reg = f"cc.{next_id}"
                    insts.append(Instruction("index", (GlobalRef(string_global(v.data)), IntVal(0)),
                                             reg, id=next_id))
                    next_id += 1
                    insts.append(replace(inst, operands=(Reg(reg), inst.operands[1])))
                else:
                    insts.append(replace(inst, operands=(v, inst.operands[1])))
            blocks.append(replace(b, insts=tuple(insts)))
        funcs.append(replace(fn, blocks=tuple(blocks)))
    return replace(p, globals=p.globals + tuple(new_globals), functions=tuple(funcs), next_id=next_id)



def check_consistency(converted: Program, st: PartialState, args, config: bytes = b"",
                      step_budget: int = DEFAULT_STEP_BUDGET) -> list[str]:
    """Re-run ``converted`` to its neck and list every entry of ``st`` that differs.

    Conversion removes references to captured slots, so the re-run keeps the
    paths of ``st`` regardless of whether they are still used after the neck.
    """
    again = run_to_neck(converted, args, config, step_budget, keep=[e.path for e in st.entries])
    want, got = st.values(), again.values()
    out = [f"{pth}: expected {v}, got {got.get(pth, 'nothing')}" for pth, v in want.items() if got.get(pth) != v]
    out += [f"{pth}: unexpected entry {v}" for pth, v in got.items() if pth not in want]
    return out
