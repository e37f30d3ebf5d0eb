"""Locate the neck: the point that splits option handling from the main work.

A heuristic picks a starting instruction (a use of argv inside a loop, or
the first configuration-file read), then every instruction from there on is
checked for three structural properties; the closest one that has all three
becomes the neck.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .analysis import (
    articulation_points, bfs_distance, build_cfg, dominators, loops, separates,
)
from .ir.model import Function, Program, Reg, insert_neck_marker

DERIVING_OPS = ("index", "field", "load")


class ProgramCategory(str, enum.Enum):
    COMMAND_LINE = "cli"
    CONFIG_FILE = "config"


class NoHeuristicMatch(Exception):
    pass


class NoAdmissibleCandidate(Exception):
    pass


@dataclass(frozen=True)
class MinerConfig:
    category: ProgramCategory = ProgramCategory.COMMAND_LINE
    parse_apis: tuple = ("read_cfg_line",)

    def __post_init__(self):
        object.__setattr__(self, "category", ProgramCategory(self.category))
        object.__setattr__(self, "parse_apis", tuple(self.parse_apis))
        if self.category is ProgramCategory.CONFIG_FILE and not self.parse_apis:
            raise ValueError("config-file programs need at least one parsing API")


@dataclass(frozen=True)
class Evidence:
    executed_once: bool
    articulation: bool
    dominates_rest: bool

    @property
    def admissible(self) -> bool:
        return self.executed_once and self.articulation and self.dominates_rest


@dataclass(frozen=True)
class NeckCandidate:
    inst: int
    block: str
    distance: int
    offset: int
    evidence: Evidence

    def as_dict(self) -> dict:
        return {
            "inst": self.inst, "block": self.block, "distance": self.distance,
            "offset": self.offset, "admissible": self.evidence.admissible,
            "evidence": {
                "executedOnceProxy": self.evidence.executed_once,
                "articulation": self.evidence.articulation,
                "dominatesRest": self.evidence.dominates_rest,
            },
        }


@dataclass
class NeckReport:
    category: str
    function: str
    start: int
    start_block: str
    chosen: int
    chosen_block: str
    neck_id: int
    candidates: list = field(default_factory=list)
    articulation_points: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "category": self.category, "function": self.function,
            "heuristicStart": {"inst": self.start, "block": self.start_block},
            "chosen": {"inst": self.chosen, "block": self.chosen_block},
            "neckmark": self.neck_id,
            "articulationPoints": self.articulation_points,
            "candidates": [c.as_dict() for c in self.candidates],
        }


def _positions(fn: Function) -> dict:
    """inst id -> (block label, offset)."""
    return {inst.id: (b.label, k) for b in fn.blocks for k, inst in enumerate(b.insts)}


def argv_uses(main: Function) -> list[int]:
    """Instructions that consume a value derived from main's argv.

    Derivation follows index/field/load and values stored into (and loaded
    back from) stack slots; the derivation steps themselves are not counted
    as uses.
    """
    if len(main.params) < 2:
        return []
    derived = {main.params[1][0]}
    slots: set[str] = set()
    changed = True
    while changed:
        changed = False
        for inst in main.instructions():
            ops = inst.operands
            if inst.op in DERIVING_OPS and isinstance(ops[0], Reg):
                src = ops[0].name
                hit = src in derived or (inst.op == "load" and src in slots)
                if hit and inst.result not in derived:
                    derived.add(inst.result)
                    changed = True
            elif inst.op == "store" and isinstance(ops[0], Reg) and ops[0].name in derived \
                    and isinstance(ops[1], Reg) and ops[1].name not in slots:
                slots.add(ops[1].name)
                changed = True
    out = []
    for inst in main.instructions():
        if inst.op in DERIVING_OPS:
            continue
        if inst.op == "store":
            if isinstance(inst.operands[0], Reg) and inst.operands[0].name in derived:
                continue  # moving the pointer into a slot, not consuming it
        if any(r in derived for r in inst.regs_used()):
            out.append(inst.id)
    return out


def heuristic_start(p: Program, cfg: MinerConfig) -> int:
    if not p.has_function("main"):
        raise NoHeuristicMatch("program has no main")
    main = p.function("main")
    g = build_cfg(main)
    li = loops(g, dominators(g))
    dist = bfs_distance(g, main.entry)
    pos = _positions(main)
    if cfg.category is ProgramCategory.COMMAND_LINE:
        sites = [i for i in argv_uses(main) if li.in_loop(pos[i][0])]
        what = "use of argv inside a loop"
    else:
        sites = [inst.id for inst in main.instructions()
                 if inst.op == "call" and inst.operands[0].name in cfg.parse_apis]
        what = "call to " + "/".join(cfg.parse_apis)
    sites = [i for i in sites if pos[i][0] in dist]
    if not sites:
        raise NoHeuristicMatch(f"no {what} in main")
    return min(sites, key=lambda i: (dist[pos[i][0]], pos[i][1], i))


def structural_candidates(p: Program, start: int) -> list[NeckCandidate]:
    """Candidates from ``start`` onward in its function, with evidence."""
    loc = p.locate(start)
    if loc is None:
        from .ir.model import UnknownInstId
        raise UnknownInstId(f"no instruction with id {start}")
    fn, sblock, sidx = loc
    g = build_cfg(fn)
    d = dominators(g)
    li = loops(g, d)
    dist = bfs_distance(g, fn.entry)
    blocks = fn.block_map()
    out = []
    for label in g.reachable_from(sblock.label):
        if label not in dist:
            continue
        offset = sidx if label == sblock.label else 0
        inst = blocks[label].insts[offset]
        after = g.reachable_from(label, include_start=False)
        ev = Evidence(
            executed_once=not li.in_loop(label) and label not in after,
            articulation=separates(g, label),
            dominates_rest=all(d.dominates(label, b) for b in after),
        )
        out.append(NeckCandidate(inst.id, label, dist[label], offset, ev))
    out.sort(key=lambda c: (c.distance, c.offset, c.inst))
    return out


def mine_neck(p: Program, cfg: MinerConfig) -> tuple[Program, NeckReport]:
    start = heuristic_start(p, cfg)
    cands = structural_candidates(p, start)
    ok = [c for c in cands if c.evidence.admissible]
    fn, sblock, _ = p.locate(start)
    if not ok:
        raise NoAdmissibleCandidate(f"no admissible neck after instruction {start} in @{fn.name}")
    best = min(ok, key=lambda c: (c.distance, c.inst))
    necked = insert_neck_marker(p, best.inst)
    aps = sorted(articulation_points(build_cfg(fn)), key=str)
    report = NeckReport(cfg.category.value, fn.name, start, sblock.label, best.inst,
                        best.block, p.next_id, cands, aps)
    return necked, report
