"""Constant folding, CFG simplification and dead-entity cleanup, iterated to
a fixed point."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .analysis import build_cfg, call_graph, reachable_from
from .interp import _CMP, _div, _wrap, _MAX, _MIN
from .ir.model import (
    BINARY_OPS, COMPARE_OPS, BasicBlock, ByteVal, FuncRef, Function, GlobalRef,
    Instruction, IntVal, Label, Program, Reg,
)

# ops without side effects that may be dropped when their result is unused
PURE_OPS = frozenset({"const", "add", "sub", "mul", "alloca", "heap", "load",
                      "field", "index", "funcaddr"}) | COMPARE_OPS


@dataclass
class PassReport:
    pass_name: str
    removed_insts: int = 0
    removed_blocks: int = 0
    removed_funcs: int = 0
    removed_globals: int = 0
    iterations: int = 0
    folded: int = 0
    fold_traps: list = field(default_factory=list)

    def merge(self, other: "PassReport") -> None:
        self.removed_insts += other.removed_insts
        self.removed_blocks += other.removed_blocks
        self.removed_funcs += other.removed_funcs
        self.removed_globals += other.removed_globals
        self.folded += other.folded
        for t in other.fold_traps:
            if t not in self.fold_traps:
                self.fold_traps.append(t)

    @property
    def changed(self) -> bool:
        return bool(self.removed_insts or self.removed_blocks or self.removed_funcs
                    or self.removed_globals or self.folded)

    def as_dict(self) -> dict:
        return {"pass": self.pass_name, "removedInsts": self.removed_insts,
                "removedBlocks": self.removed_blocks, "removedFuncs": self.removed_funcs,
                "removedGlobals": self.removed_globals, "iterations": self.iterations,
                "folded": self.folded, "foldTraps": sorted(self.fold_traps)}


def _count(p: Program) -> tuple[int, int, int, int]:
    insts = sum(len(b.insts) for f in p.functions for b in f.blocks)
    blocks = sum(len(f.blocks) for f in p.functions)
    return insts, blocks, len(p.functions), len(p.globals)


def _diff_into(report: PassReport, before: Program, after: Program) -> None:
    a, b = _count(before), _count(after)
    report.removed_insts += a[0] - b[0]
    report.removed_blocks += a[1] - b[1]
    report.removed_funcs += a[2] - b[2]
    report.removed_globals += a[3] - b[3]


# -- constant folding ------------------------------------------------------------

def _literal(o, consts: dict):
    if isinstance(o, (IntVal, ByteVal)):
        return o.value
    if isinstance(o, Reg):
        c = consts.get(o.name)
        if isinstance(c, (IntVal, ByteVal)):
            return c.value
    return None


def _fold_function(fn: Function, report: PassReport) -> Function:
    consts: dict = {}
    changed = True
    blocks = list(fn.blocks)
    while changed:
        changed = False
        for bi, b in enumerate(blocks):
            insts = list(b.insts)
            for k, inst in enumerate(insts):
                if inst.op == "const" and inst.result not in consts:
                    consts[inst.result] = inst.operands[0]
                    changed = True
                elif inst.op in BINARY_OPS or inst.op in COMPARE_OPS:
                    a = _literal(inst.operands[0], consts)
                    c = _literal(inst.operands[1], consts)
                    if a is None or c is None:
                        continue
                    if inst.op == "div":
                        if c == 0:
                            if inst.id not in report.fold_traps:
                                report.fold_traps.append(inst.id)
                            continue
                        v = _div(a, c)
                    elif inst.op in COMPARE_OPS:
                        v = 1 if _CMP[inst.op](a, c) else 0
                    else:
                        v = {"add": a + c, "sub": a - c, "mul": a * c}[inst.op]
                    if v > _MAX or v < _MIN:
                        v = _wrap(v)
                    insts[k] = Instruction("const", (IntVal(v),), inst.result, id=inst.id)
                    report.folded += 1
                    changed = True
                elif inst.op == "cbr":
                    cond, t, f = inst.operands
                    c = _literal(cond, consts)
                    if c is None and t != f:
                        continue
                    target = t if (c if c is not None else 1) else f
                    insts[k] = Instruction("br", (Label(target.name),), id=inst.id)
                    report.folded += 1
                    changed = True
            blocks[bi] = replace(b, insts=tuple(insts))
        fn = replace(fn, blocks=tuple(blocks))
    return fn


def constant_fold(p: Program) -> tuple[Program, PassReport]:
    report = PassReport("constant_fold", iterations=1)
    out = replace(p, functions=tuple(_fold_function(f, report) for f in p.functions))
    _diff_into(report, p, out)
    return out, report


# -- CFG simplification ---------------------------------------------------------------

def simplify_cfg(fn: Function) -> tuple[Function, PassReport]:
    report = PassReport("simplify_cfg", iterations=1)
    before = fn
    while True:
        g = build_cfg(fn)
        live = [b for b in fn.blocks if b.label in g.reachable]
        if len(live) != len(fn.blocks):
            fn = replace(fn, blocks=tuple(live))
            continue
        merged = False
        bmap = fn.block_map()
        for b in fn.blocks:
            succ = g.succs[b.label]
            if len(succ) != 1:
                continue
            s = succ[0]
            if s == b.label or s == fn.entry or len(g.preds[s]) != 1:
                continue
            joined = BasicBlock(b.label, b.insts[:-1] + bmap[s].insts)
            fn = replace(fn, blocks=tuple(joined if x.label == b.label else x
                                          for x in fn.blocks if x.label != s))
            merged = True
            break
        if not merged:
            break
    report.removed_blocks = len(before.blocks) - len(fn.blocks)
    report.removed_insts = sum(len(b.insts) for b in before.blocks) - sum(len(b.insts) for b in fn.blocks)
    return fn, report


# -- cleanup ------------------------------------------------------------------------

def _use_counts(p: Program) -> tuple[dict, dict]:
    """Uses of each function from outside itself, and of each global."""
    fuses = {f.name: 0 for f in p.functions}
    guses = {g.name: 0 for g in p.globals}
    for f in p.functions:
        for inst in f.instructions():
            for o in inst.operands:
                if isinstance(o, FuncRef) and o.name in fuses and o.name != f.name:
                    fuses[o.name] += 1
                elif isinstance(o, GlobalRef) and o.name in guses:
                    guses[o.name] += 1
    return fuses, guses


def _nonzero_divisor(inst: Instruction, consts: dict) -> bool:
    v = _literal(inst.operands[1], consts)
    return v is not None and v != 0


def _clean_function(fn: Function) -> Function:
    while True:
        uses: dict[str, list] = {}
        consts = {}
        for inst in fn.instructions():
            if inst.op == "const":
                consts[inst.result] = inst.operands[0]
            for k, o in enumerate(inst.operands):
                if isinstance(o, Reg):
                    uses.setdefault(o.name, []).append((inst, k))
        drop: set[int] = set()
        for inst in fn.instructions():
            if inst.result is None:
                continue
            us = uses.get(inst.result, [])
            if not us:
                if inst.op in PURE_OPS or (inst.op == "div" and _nonzero_divisor(inst, consts)):
                    drop.add(inst.id)
            elif inst.op == "alloca" and len(us) == 1:
                store, k = us[0]
                if store.op == "store" and k == 1 and store.operands[0] != Reg(inst.result):
                    drop.update((inst.id, store.id))
        if not drop:
            return fn
        fn = replace(fn, blocks=tuple(
            replace(b, insts=tuple(i for i in b.insts if i.id not in drop)) for b in fn.blocks))


def cleanup(p: Program, visited_funcs) -> tuple[Program, PassReport]:
    report = PassReport("cleanup", iterations=1)
    before = p
    visited = set(visited_funcs)
    taken = call_graph(p).address_taken

    # unused functions that never ran during partial interpretation
    fuses, _ = _use_counts(p)
    gone = {f for f, n in fuses.items() if n == 0 and f not in visited and f != "main" and f not in taken}
    p = replace(p, functions=tuple(f for f in p.functions if f.name not in gone))

    # functions no longer reachable from main
    if p.has_function("main"):
        cg = call_graph(p)
        keep = reachable_from(cg, "main") | cg.address_taken
        p = replace(p, functions=tuple(f for f in p.functions if f.name in keep))

    # unused globals
    _, guses = _use_counts(p)
    p = replace(p, globals=tuple(g for g in p.globals if guses[g.name] > 0))

    # unused stack variables and useless instructions
    p = replace(p, functions=tuple(_clean_function(f) for f in p.functions))
    _diff_into(report, before, p)
    return p, report


def remove_neckmark(p: Program) -> Program:
    return replace(p, functions=tuple(
        replace(f, blocks=tuple(replace(b, insts=tuple(i for i in b.insts if i.op != "neckmark"))
                                for b in f.blocks))
        for f in p.functions))


def run_simplify(p: Program, visited_funcs) -> tuple[Program, list[PassReport]]:
    totals = {n: PassReport(n) for n in ("constant_fold", "simplify_cfg", "cleanup")}
    neck_removed = False
    while True:
        start = p
        p, r = constant_fold(p)
        totals["constant_fold"].merge(r)
        cfg_r = PassReport("simplify_cfg")
        funcs = []
        for f in p.functions:
            f2, r = simplify_cfg(f)
            cfg_r.merge(r)
            funcs.append(f2)
        p = replace(p, functions=tuple(funcs))
        totals["simplify_cfg"].merge(cfg_r)
        p, r = cleanup(p, visited_funcs)
        totals["cleanup"].merge(r)
        for t in totals.values():
            t.iterations += 1
        if p == start:
            if neck_removed or not p.neck_ids():
                break
            p = remove_neckmark(p)
            totals["cleanup"].removed_insts += 1
            neck_removed = True
    return p, list(totals.values())
