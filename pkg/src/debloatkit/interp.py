"""Concrete interpreter for the IR.

Two entry points:

* :func:`run_full` executes ``main`` to completion and reports stdout and the
  exit status.
* :func:`run_to_neck` executes only the supplied arguments along the single
  path from entry to the ``neckmark`` and captures the partial state there.

Memory is a list of regions, each a list of cells; a pointer is a
``(region, offset)`` pair counted in cells.  Region 0 is reserved for null.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Union

from .analysis import build_cfg
from .ir.model import (
    Arr, Byte, ByteVal, FuncRef, Function, GlobalRef, Instruction, Int, IntVal,
    NullPtr, Program, Ptr, Reg, Str, StrVal, StructRef, TypeExpr, field_offset,
    scalar_cells, size_of,
)
from .ir.validate import register_types

DEFAULT_STEP_BUDGET = 10 ** 7
MAX_CALL_DEPTH = 200
_MIN, _MAX = -(2 ** 63), 2 ** 63 - 1


class Ptr_(NamedTuple):
    region: int
    offset: int


class FuncPtr(NamedTuple):
    name: str


NULL = Ptr_(0, 0)
Value = Union[int, Ptr_, FuncPtr, None]  # None is an undefined value


# -- errors ------------------------------------------------------------------

class Trap(Exception):
    KINDS = ("DivByZero", "OutOfBounds", "UndefBranch", "UndefValue",
             "BudgetExceeded", "BadIndirectCall")

    def __init__(self, kind: str, inst: Optional[int], detail: str = ""):
        super().__init__(f"{kind} at inst {inst}" + (f": {detail}" if detail else ""))
        self.kind = kind
        self.inst = inst
        self.detail = detail
        self.stdout = b""


class NeckNotReached(Exception):
    pass


class DelayedInputBeforeNeck(Exception):
    pass


class _NeckHit(Exception):
    def __init__(self, state: "PartialState"):
        self.state = state


# -- public data ---------------------------------------------------------------

@dataclass(frozen=True)
class Invocation:
    """Arguments (after ``argv[0]``), stdin bytes, and configuration stream.

    ``stdin=None`` marks stdin as delayed: it is not available yet.
    """
    args: tuple = ()
    stdin: Optional[bytes] = b""
    config: bytes = b""
    step_budget: int = DEFAULT_STEP_BUDGET
    argv0: str = "prog"


@dataclass(frozen=True)
class RunOutcome:
    stdout: bytes
    exit_status: int
    steps: int
    trap: Optional[str] = None

    def as_dict(self) -> dict:
        return {"stdout": self.stdout.decode("latin-1"), "exitStatus": self.exit_status,
                "trap": self.trap}


# paths naming captured locations

@dataclass(frozen=True)
class GlobalPath:
    name: str

    def __str__(self) -> str:
        return f"@{self.name}"


@dataclass(frozen=True)
class SlotPath:
    function: str
    reg: str

    def __str__(self) -> str:
        return f"{self.function}:%{self.reg}"


@dataclass(frozen=True)
class DerefPath:
    base: "Path"

    def __str__(self) -> str:
        return f"*{self.base}"


@dataclass(frozen=True)
class ElemPath:
    base: "Path"
    index: int

    def __str__(self) -> str:
        return f"({self.base})#{self.index}"


Path = Union[GlobalPath, SlotPath, DerefPath, ElemPath]


def path_root(p: Path) -> Path:
    while isinstance(p, (DerefPath, ElemPath)):
        p = p.base
    return p


def path_to_json(p: Path) -> dict:
    if isinstance(p, GlobalPath):
        return {"global": p.name}
    if isinstance(p, SlotPath):
        return {"slot": {"function": p.function, "reg": p.reg}}
    if isinstance(p, DerefPath):
        return {"deref": path_to_json(p.base)}
    return {"elem": path_to_json(p.base), "index": p.index}


def path_from_json(d: dict) -> Path:
    if "global" in d:
        return GlobalPath(d["global"])
    if "slot" in d:
        return SlotPath(d["slot"]["function"], d["slot"]["reg"])
    if "deref" in d:
        return DerefPath(path_from_json(d["deref"]))
    return ElemPath(path_from_json(d["elem"]), int(d["index"]))


@dataclass(frozen=True)
class CapturedVar:
    path: Path
    type: TypeExpr
    value: object  # ConstValue


@dataclass(frozen=True)
class PartialState:
    entries: tuple
    visited_funcs: frozenset
    neck_crossings: int = 1
    excluded: tuple = ()  # (path, reason)

    def values(self) -> dict:
        return {e.path: e.value for e in self.entries}

    def by_name(self) -> dict:
        return {str(e.path): e.value for e in self.entries}


# -- machine -------------------------------------------------------------------

class _Block:
    __slots__ = ("label", "ids", "ops", "term", "term_id", "n")


class _CompiledFn:
    __slots__ = ("fn", "blocks", "params", "entry", "types")


@dataclass
class Frame:
    function: str
    regs: dict
    slots: dict = field(default_factory=dict)  # alloca reg -> region id
    site: Optional[int] = None  # call or neck instruction currently executing


class _Return:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


def _wrap(v: int) -> int:
    return ((v - _MIN) % (1 << 64)) + _MIN


def _div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


_ARITH = {"add": operator.add, "sub": operator.sub, "mul": operator.mul}
_CMP = {"eq": operator.eq, "ne": operator.ne, "lt": operator.lt,
        "le": operator.le, "gt": operator.gt, "ge": operator.ge}


class Machine:
    """Interpreter state for one run.  Not reusable across runs."""

    def __init__(self, prog: Program, inv: Invocation, partial: bool = False,
                 trace: Optional[list] = None, watch: Optional[set] = None, keep=frozenset()):
        self.prog = prog
        self.keep = keep  # slot paths captured even when unreferenced after the neck
        self.inv = inv
        self.partial = partial
        self.trace = trace
        self.watch = watch or set()
        self.watch_counts: dict[int, int] = {i: 0 for i in self.watch}
        self.slow = trace is not None or bool(self.watch)
        self.mem: list = [None]
        self.kinds: list[str] = ["null"]
        self.readonly: list[bool] = [True]
        self.rodata: dict[bytes, int] = {}
        self.string_regions: set[int] = set()
        self.global_regions: dict[str, int] = {}
        self.stdout = bytearray()
        self.stdin_pos = 0
        self.config_pos = 0
        self.steps = 0
        self.budget = inv.step_budget
        self.frames: list[Frame] = []
        self.visited: set[str] = set()
        self.funcs = {f.name: f for f in prog.functions}
        self.compiled: dict[str, _CompiledFn] = {}
        self.argv_regions: set[int] = set()
        self._init_globals()

    # memory

    def new_region(self, cells: list, kind: str, readonly: bool = False) -> int:
        self.mem.append(cells)
        self.kinds.append(kind)
        self.readonly.append(readonly)
        return len(self.mem) - 1

    def intern(self, data: bytes) -> Ptr_:
        rid = self.rodata.get(data)
        if rid is None:
            rid = self.new_region(list(data) + [0], "rodata", readonly=True)
            self.rodata[data] = rid
            self.string_regions.add(rid)
        return Ptr_(rid, 0)

    def const_value(self, c) -> Value:
        if isinstance(c, (IntVal, ByteVal)):
            return c.value
        if isinstance(c, StrVal):
            return self.intern(c.data)
        if isinstance(c, NullPtr):
            return NULL
        raise TypeError(c)

    def _zero_cells(self, t: TypeExpr) -> list:
        return [0 if isinstance(ct, (Int, Byte)) else NULL for ct in scalar_cells(t, self.prog)]

    def _init_globals(self) -> None:
        for g in self.prog.globals:
            t, init = g.type, g.init
            if isinstance(t, Arr) and isinstance(init, StrVal):
                cells = list(init.data) + [0] * (t.length - len(init.data))
                rid = self.new_region(cells, "global")
                self.string_regions.add(rid)
            elif isinstance(t, (Arr, StructRef)):
                rid = self.new_region(self._zero_cells(t), "global")
            else:
                rid = self.new_region([self.const_value(init)], "global")
            self.global_regions[g.name] = rid

    def _load(self, p, inst_id: int):
        if type(p) is not Ptr_:
            raise Trap("UndefValue" if p is None else "OutOfBounds", inst_id, "load through non-pointer")
        cells = self.mem[p.region]
        if cells is None or not 0 <= p.offset < len(cells):
            raise Trap("OutOfBounds", inst_id)
        return cells[p.offset]

    def _store(self, p, v, inst_id: int) -> None:
        if type(p) is not Ptr_:
            raise Trap("UndefValue" if p is None else "OutOfBounds", inst_id, "store through non-pointer")
        cells = self.mem[p.region]
        if cells is None or not 0 <= p.offset < len(cells) or self.readonly[p.region]:
            raise Trap("OutOfBounds", inst_id)
        cells[p.offset] = v

    def read_cstring(self, p, inst_id: int) -> bytes:
        out = bytearray()
        if type(p) is not Ptr_:
            raise Trap("UndefValue" if p is None else "OutOfBounds", inst_id, "string through non-pointer")
        cells = self.mem[p.region]
        if cells is None:
            raise Trap("OutOfBounds", inst_id)
        i = p.offset
        while True:
            if not 0 <= i < len(cells):
                raise Trap("OutOfBounds", inst_id, "unterminated string")
            c = cells[i]
            if c is None:
                raise Trap("UndefValue", inst_id, "undefined byte in string")
            if c == 0:
                return bytes(out)
            out.append(c)
            i += 1

    # compilation

    def _getter(self, o, regs_types) -> Callable:
        if isinstance(o, Reg):
            name = o.name
            return lambda regs: regs[name]
        if isinstance(o, GlobalRef):
            v = Ptr_(self.global_regions[o.name], 0)
        else:
            v = self.const_value(o)
        return lambda regs: v

    def compile(self, name: str) -> _CompiledFn:
        cf = self.compiled.get(name)
        if cf is not None:
            return cf
        fn = self.funcs[name]
        cf = _CompiledFn()
        cf.fn = fn
        cf.params = [n for n, _ in fn.params]
        cf.entry = fn.entry
        cf.types = register_types(self.prog, fn)
        cf.blocks = {}
        for b in fn.blocks:
            blk = _Block()
            blk.label = b.label
            body = b.insts[:-1]
            blk.ids = [i.id for i in body]
            blk.ops = [self._compile_inst(i, cf.types) for i in body]
            blk.term = self._compile_term(b.insts[-1], cf.types)
            blk.term_id = b.insts[-1].id
            blk.n = len(b.insts)
            cf.blocks[b.label] = blk
        self.compiled[name] = cf
        return cf

    def _compile_term(self, inst: Instruction, types) -> Callable:
        iid = inst.id
        if inst.op == "br":
            target = inst.operands[0].name
            return lambda regs: target
        if inst.op == "cbr":
            gc = self._getter(inst.operands[0], types)
            t, f = inst.operands[1].name, inst.operands[2].name

            def cbr(regs):
                c = gc(regs)
                if c is None:
                    raise Trap("UndefBranch", iid)
                return t if c else f
            return cbr
        if inst.operands:
            gv = self._getter(inst.operands[0], types)
            return lambda regs: _Return(gv(regs))
        return lambda regs: _Return(None)

    def _compile_inst(self, inst: Instruction, types) -> Callable:
        op, r, iid = inst.op, inst.result, inst.id
        ops = inst.operands
        m = self

        if op == "const":
            v = self.const_value(ops[0])

            def f(regs):
                regs[r] = v
            return f
        if op in _ARITH or op == "div":
            ga, gb = self._getter(ops[0], types), self._getter(ops[1], types)
            fn = _ARITH.get(op)

            def f(regs):
                a, b = ga(regs), gb(regs)
                if a is None or b is None:
                    regs[r] = None
                    return
                if fn is None:
                    if b == 0:
                        raise Trap("DivByZero", iid)
                    v = _div(a, b)
                else:
                    v = fn(a, b)
                if v > _MAX or v < _MIN:
                    v = _wrap(v)
                regs[r] = v
            return f
        if op in _CMP:
            ga, gb = self._getter(ops[0], types), self._getter(ops[1], types)
            fn = _CMP[op]

            def f(regs):
                a, b = ga(regs), gb(regs)
                regs[r] = None if a is None or b is None else (1 if fn(a, b) else 0)
            return f
        if op in ("alloca", "heap"):
            n = size_of(inst.type, self.prog)
            kind = "stack" if op == "alloca" else "heap"

            def f(regs):
                rid = m.new_region([None] * n, kind)
                regs[r] = Ptr_(rid, 0)
                if kind == "stack":
                    m.frames[-1].slots[r] = rid
            return f
        if op == "load":
            gp = self._getter(ops[0], types)

            def f(regs):
                regs[r] = m._load(gp(regs), iid)
            return f
        if op == "store":
            gv, gp = self._getter(ops[0], types), self._getter(ops[1], types)

            def f(regs):
                m._store(gp(regs), gv(regs), iid)
            return f
        if op == "field":
            gb = self._getter(ops[0], types)
            base_t = self._operand_type(ops[0], types)
            off = field_offset(base_t.pointee.name, ops[1].value, self.prog)

            def f(regs):
                p = gb(regs)
                regs[r] = Ptr_(p.region, p.offset + off) if type(p) is Ptr_ else None
            return f
        if op == "index":
            gb, gi = self._getter(ops[0], types), self._getter(ops[1], types)
            base_t = self._operand_type(ops[0], types)
            if isinstance(base_t, Ptr):
                elem = base_t.pointee.elem if isinstance(base_t.pointee, Arr) else base_t.pointee
                stride = size_of(elem, self.prog)
            else:
                stride = 1

            def f(regs):
                p, i = gb(regs), gi(regs)
                regs[r] = Ptr_(p.region, p.offset + i * stride) if type(p) is Ptr_ and i is not None else None
            return f
        if op == "funcaddr":
            v = FuncPtr(ops[0].name)

            def f(regs):
                regs[r] = v
            return f
        if op == "call":
            name = ops[0].name
            gargs = [self._getter(o, types) for o in ops[1:]]
            intrinsic = None if name in self.funcs else getattr(self, "_i_" + name)

            def f(regs):
                args = [g(regs) for g in gargs]
                if intrinsic is not None:
                    v = intrinsic(args, iid)
                else:
                    m.frames[-1].site = iid
                    v = m.invoke(name, args)
                if r is not None:
                    regs[r] = v
            return f
        if op == "icall":
            gfp = self._getter(ops[0], types)
            gargs = [self._getter(o, types) for o in ops[1:]]

            def f(regs):
                fp = gfp(regs)
                if type(fp) is not FuncPtr or fp.name not in m.funcs:
                    raise Trap("BadIndirectCall", iid, "target is not a function")
                callee = m.funcs[fp.name]
                if len(callee.params) != len(gargs) or (r is not None and callee.ret is None):
                    raise Trap("BadIndirectCall", iid, "signature mismatch")
                m.frames[-1].site = iid
                v = m.invoke(fp.name, [g(regs) for g in gargs])
                if r is not None:
                    regs[r] = v
            return f
        if op == "neckmark":
            if not self.partial:
                return lambda regs: None

            def f(regs):
                m.frames[-1].site = iid
                raise _NeckHit(m.capture())
            return f
        raise ValueError(f"cannot compile {op}")

    def _operand_type(self, o, types):
        if isinstance(o, Reg):
            return types[o.name]
        if isinstance(o, GlobalRef):
            return Ptr(self.prog.global_def(o.name).type)
        return Str()

    # execution

    def invoke(self, name: str, args: list) -> Value:
        if len(self.frames) >= MAX_CALL_DEPTH:
            raise Trap("BudgetExceeded", self.frames[-1].site, "call depth")
        cf = self.compile(name)
        regs = dict(zip(cf.params, args))
        frame = Frame(name, regs)
        self.frames.append(frame)
        self.visited.add(name)
        blocks = cf.blocks
        label = cf.entry
        slow = self.slow
        while True:
            blk = blocks[label]
            self.steps += blk.n
            if self.steps > self.budget:
                raise Trap("BudgetExceeded", blk.term_id)
            if slow:
                for iid, op in zip(blk.ids, blk.ops):
                    self._observe(iid)
                    op(regs)
                self._observe(blk.term_id)
            else:
                for op in blk.ops:
                    op(regs)
            nxt = blk.term(regs)
            if type(nxt) is str:
                label = nxt
            else:
                self.frames.pop()
                return nxt.value

    def _observe(self, iid: int) -> None:
        if self.trace is not None:
            self.trace.append(iid)
        if iid in self.watch_counts:
            self.watch_counts[iid] += 1

    def setup_argv(self) -> tuple[int, Ptr_]:
        strs = [self.inv.argv0] + list(self.inv.args)
        ptrs = []
        for s in strs:
            data = s.encode("utf-8") if isinstance(s, str) else bytes(s)
            rid = self.new_region(list(data) + [0], "argv")
            self.argv_regions.add(rid)
            ptrs.append(Ptr_(rid, 0))
        arr = self.new_region(ptrs + [NULL], "argv")
        self.argv_regions.add(arr)
        return len(strs), Ptr_(arr, 0)

    def run_main(self) -> Value:
        argc, argv = self.setup_argv()
        return self.invoke("main", [argc, argv])

    # intrinsics

    def _i_print_int(self, args, iid):
        if args[0] is None:
            raise Trap("UndefValue", iid)
        self.stdout += str(args[0]).encode()

    def _i_print_str(self, args, iid):
        self.stdout += self.read_cstring(args[0], iid)

    def _read_stream(self, data: bytes, pos: int, buf, cap, iid) -> tuple[int, int]:
        if cap is None or cap < 1:
            raise Trap("OutOfBounds", iid, "bad read capacity")
        if pos >= len(data) or cap == 1:
            return 0, pos
        end = data.find(b"\n", pos, pos + cap - 1)
        end = pos + cap - 1 if end < 0 else end + 1
        chunk = data[pos:end]
        for i, byte in enumerate(chunk):
            self._store(Ptr_(buf.region, buf.offset + i) if type(buf) is Ptr_ else buf, byte, iid)
        self._store(Ptr_(buf.region, buf.offset + len(chunk)) if type(buf) is Ptr_ else buf, 0, iid)
        return len(chunk), pos + len(chunk)

    def _i_read_line(self, args, iid):
        if self.inv.stdin is None:
            if self.partial:
                raise DelayedInputBeforeNeck(f"read_line at inst {iid} before the neck")
            return 0
        n, self.stdin_pos = self._read_stream(self.inv.stdin, self.stdin_pos, args[0], args[1], iid)
        return n

    def _i_read_cfg_line(self, args, iid):
        n, self.config_pos = self._read_stream(self.inv.config, self.config_pos, args[0], args[1], iid)
        return n

    def _i_str_eq(self, args, iid):
        return 1 if self.read_cstring(args[0], iid) == self.read_cstring(args[1], iid) else 0

    def _i_atoi(self, args, iid):
        s = self.read_cstring(args[0], iid).lstrip(b" \t")
        sign = 1
        if s[:1] in (b"-", b"+"):
            sign = -1 if s[:1] == b"-" else 1
            s = s[1:]
        digits = 0
        n = 0
        for c in s:
            if not 48 <= c <= 57:
                break
            n = n * 10 + (c - 48)
            digits += 1
        v = sign * n
        return _wrap(v) if v > _MAX or v < _MIN else v

    # partial-state capture

    def capture(self) -> PartialState:
        entries: list[CapturedVar] = []
        excluded: list[tuple] = []
        for g in self.prog.globals:
            rid = self.global_regions[g.name]
            self._capture_loc(GlobalPath(g.name), g.type, rid, 0, 0, entries, excluded)
        argslots = _param_slots(self.prog)
        for frame in self.frames:
            fn = self.funcs[frame.function]
            live = _live_refs(fn, frame.site)
            for inst in fn.instructions():
                if inst.op != "alloca" or inst.result not in frame.slots:
                    continue
                path = SlotPath(fn.name, inst.result)
                if (fn.name, inst.result) in argslots:
                    excluded.append((path, "holds argc/argv"))
                    continue
                if inst.result not in live and path not in self.keep:
                    excluded.append((path, "not referenced after the neck"))
                    continue
                self._capture_loc(path, inst.type, frame.slots[inst.result], 0, 0, entries, excluded)
        state = PartialState(tuple(entries), frozenset(self.visited), 1, tuple(excluded))
        for e in state.entries:
            again = self.read_path(e.path, e.type)
            assert again == e.value, f"capture of {e.path} is inconsistent"
        return state

    def _string_at(self, v) -> Optional[bytes]:
        if type(v) is Ptr_ and v.region in self.string_regions and v.offset == 0:
            try:
                return self.read_cstring(v, None)
            except Trap:
                return None
        return None

    def _capture_loc(self, path, t, rid, off, depth, entries, excluded) -> None:
        cells = self.mem[rid]
        if isinstance(t, StructRef):
            for k, ft in enumerate(self.prog.struct(t.name).fields):
                self._capture_loc(ElemPath(path, k), ft, rid,
                                  off + field_offset(t.name, k, self.prog), depth, entries, excluded)
            return
        if isinstance(t, Arr):
            excluded.append((path, "array"))
            return
        if not 0 <= off < len(cells):
            excluded.append((path, "out of bounds"))
            return
        v = cells[off]
        if v is None:
            excluded.append((path, "undefined"))
            return
        if isinstance(t, Int):
            entries.append(CapturedVar(path, t, IntVal(v)))
            return
        if isinstance(t, Byte):
            entries.append(CapturedVar(path, t, ByteVal(v)))
            return
        # pointer-like
        if type(v) is FuncPtr:
            excluded.append((path, "function pointer"))
            return
        if v == NULL:
            entries.append(CapturedVar(path, t, NullPtr()))
            return
        if v.region in self.argv_regions:
            excluded.append((path, "points into argv"))
            return
        s = self._string_at(v)
        if s is not None and (isinstance(t, Str) or t == Ptr(Byte())):
            entries.append(CapturedVar(path, t, StrVal(s)))
            return
        if isinstance(t, Str) or depth >= 1 or self.mem[v.region] is None:
            excluded.append((path, "pointer depth"))
            return
        target = t.pointee
        if isinstance(target, (Int, Byte, StructRef)):
            self._capture_loc(DerefPath(path), target, v.region, v.offset, depth + 1, entries, excluded)
        else:
            excluded.append((DerefPath(path), "pointer depth"))

    def read_path(self, path: Path, t: TypeExpr):
        """Re-read a captured location from memory as a constant."""
        rid, off = self._addr(path)
        v = self.mem[rid][off]
        if isinstance(t, Int):
            return IntVal(v)
        if isinstance(t, Byte):
            return ByteVal(v)
        if v == NULL:
            return NullPtr()
        return StrVal(self.read_cstring(v, None))

    def _addr(self, path: Path) -> tuple[int, int]:
        if isinstance(path, GlobalPath):
            return self.global_regions[path.name], 0
        if isinstance(path, SlotPath):
            for frame in self.frames:
                if frame.function == path.function and path.reg in frame.slots:
                    return frame.slots[path.reg], 0
            raise KeyError(path)
        if isinstance(path, DerefPath):
            rid, off = self._addr(path.base)
            p = self.mem[rid][off]
            return p.region, p.offset
        rid, off = self._addr(path.base)
        t = self._path_type(path.base)
        return rid, off + field_offset(t.name, path.index, self.prog)

    def _path_type(self, path: Path) -> TypeExpr:
        if isinstance(path, GlobalPath):
            return self.prog.global_def(path.name).type
        if isinstance(path, SlotPath):
            fn = self.funcs[path.function]
            return next(i.type for i in fn.instructions() if i.result == path.reg)
        if isinstance(path, DerefPath):
            return self._path_type(path.base).pointee
        return self.prog.struct(self._path_type(path.base).name).fields[path.index]


def _param_slots(prog: Program) -> set:
    """Slots of main that receive argc/argv directly."""
    out = set()
    if not prog.has_function("main"):
        return out
    main = prog.function("main")
    params = {n for n, _ in main.params}
    for inst in main.instructions():
        if inst.op == "store" and isinstance(inst.operands[0], Reg) and inst.operands[0].name in params \
                and isinstance(inst.operands[1], Reg):
            out.add(("main", inst.operands[1].name))
    return out


def _live_refs(fn: Function, site: Optional[int]) -> set:
    """Registers referenced by instructions that may run from ``site`` on."""
    if site is None:
        return {r for i in fn.instructions() for r in i.regs_used()}
    g = build_cfg(fn)
    for b in fn.blocks:
        for idx, inst in enumerate(b.insts):
            if inst.id == site:
                after = g.reachable_from(b.label, include_start=False)
                insts = list(b.insts[idx:])
                for b2 in fn.blocks:
                    if b2.label in after:
                        insts.extend(b2.insts)
                return {r for i in insts for r in i.regs_used()}
    return set()


# -- entry points ----------------------------------------------------------------

def run_full(p: Program, inv: Invocation, trace: Optional[list] = None,
             watch: Optional[set] = None, counts: Optional[dict] = None) -> RunOutcome:
    """Run ``main`` to completion.  Raises :class:`Trap` on a runtime fault.

    ``watch``/``counts`` record how often the listed instruction ids execute.
    """
    m = Machine(p, inv, partial=False, trace=trace, watch=watch)
    try:
        ret = m.run_main()
    except Trap as t:
        t.stdout = bytes(m.stdout)
        if counts is not None:
            counts.update(m.watch_counts)
        raise
    if counts is not None:
        counts.update(m.watch_counts)
    status = ret if isinstance(ret, int) else 0
    return RunOutcome(bytes(m.stdout), status, m.steps)


def execute(p: Program, inv: Invocation) -> RunOutcome:
    """Like :func:`run_full` but reports a trap as part of the outcome."""
    try:
        return run_full(p, inv)
    except Trap as t:
        return RunOutcome(t.stdout, -1, 0, t.kind)


def run_to_neck(p: Program, args, config: bytes = b"",
                step_budget: int = DEFAULT_STEP_BUDGET,
                trace: Optional[list] = None, keep=()) -> PartialState:
    """Execute the supplied ``args`` up to the neck and capture the state there.

    Stack slots not referenced after the neck are left out unless their path
    (or a path rooted at them) is listed in ``keep``.
    """
    necks = p.neck_ids()
    if len(necks) != 1:
        raise NeckNotReached(f"expected exactly one neckmark, found {len(necks)}")
    inv = Invocation(tuple(args), None, config, step_budget)
    m = Machine(p, inv, partial=True, trace=trace, keep=frozenset(path_root(k) for k in keep))
    try:
        m.run_main()
    except _NeckHit as hit:
        return hit.state
    except Trap as t:
        if t.kind == "BudgetExceeded":
            raise
        raise NeckNotReached(f"trapped before the neck: {t}") from t
    raise NeckNotReached("main returned before reaching the neck")


# -- JSON ------------------------------------------------------------------------

def const_to_json(c) -> dict:
    if isinstance(c, IntVal):
        return {"int": c.value}
    if isinstance(c, ByteVal):
        return {"byte": c.value}
    if isinstance(c, StrVal):
        return {"str": c.data.decode("latin-1")}
    return {"null": True}


def const_from_json(d: dict):
    if "int" in d:
        return IntVal(int(d["int"]))
    if "byte" in d:
        return ByteVal(int(d["byte"]))
    if "str" in d:
        return StrVal(d["str"].encode("latin-1"))
    return NullPtr()


def state_to_json(st: PartialState) -> dict:
    return {
        "entries": [
            {"name": str(e.path), "path": path_to_json(e.path), "type": str(e.type),
             "value": const_to_json(e.value)}
            for e in st.entries
        ],
        "visitedFuncs": sorted(st.visited_funcs),
        "neckCrossings": st.neck_crossings,
        "excluded": [{"name": str(pth), "path": path_to_json(pth), "reason": why}
                     for pth, why in st.excluded],
    }


def state_from_json(d: dict) -> PartialState:
    from .ir.parser import parse_type

    entries = tuple(
        CapturedVar(path_from_json(e["path"]), parse_type(e["type"]), const_from_json(e["value"]))
        for e in d["entries"]
    )
    excluded = tuple((path_from_json(x["path"]), x["reason"]) for x in d.get("excluded", []))
    return PartialState(entries, frozenset(d["visitedFuncs"]), int(d.get("neckCrossings", 1)), excluded)
