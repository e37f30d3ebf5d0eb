"""Graph analyses over IR functions and programs.

The graph routines (dominators, articulation points, loops, distances) work
on a plain :class:`Cfg` so they can be exercised on arbitrary digraphs as
well as on functions.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional

from .ir.model import FuncRef, Function, GlobalRef, Program, Reg


class NoNeck(Exception):
    pass


@dataclass
class Cfg:
    nodes: tuple
    succs: dict
    preds: dict
    entry: Hashable
    reachable: frozenset = frozenset()

    @classmethod
    def from_edges(cls, nodes: Iterable, edges: Iterable[tuple], entry) -> "Cfg":
        nodes = tuple(nodes)
        succs = {n: [] for n in nodes}
        preds = {n: [] for n in nodes}
        for a, b in edges:
            if b not in succs[a]:
                succs[a].append(b)
                preds[b].append(a)
        seen = {entry}
        work = [entry]
        while work:
            n = work.pop()
            for s in succs[n]:
                if s not in seen:
                    seen.add(s)
                    work.append(s)
        return cls(nodes, succs, preds, entry, frozenset(seen))

    @property
    def edges(self) -> list[tuple]:
        return [(a, b) for a in self.nodes for b in self.succs[a]]

    @property
    def unreachable(self) -> set:
        return set(self.nodes) - self.reachable

    def reachable_from(self, start, include_start: bool = True) -> set:
        seen: set = set()
        work = [start] if include_start else list(self.succs[start])
        while work:
            n = work.pop()
            if n in seen:
                continue
            seen.add(n)
            work.extend(self.succs[n])
        return seen


def build_cfg(f: Function) -> Cfg:
    edges = [(b.label, s) for b in f.blocks for s in b.successors()]
    return Cfg.from_edges((b.label for b in f.blocks), edges, f.entry)


def cfg_to_dot(f: Function) -> str:
    g = build_cfg(f)
    lines = [f'digraph "{f.name}" {{']
    for n in g.nodes:
        style = ' [style=dashed]' if n not in g.reachable else ""
        lines.append(f'  "{n}"{style};')
    for a, b in g.edges:
        lines.append(f'  "{a}" -> "{b}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- dominators --------------------------------------------------------------

@dataclass
class DomTree:
    idom: dict
    dom_sets: dict = field(default_factory=dict, repr=False)

    def dominates(self, a, b) -> bool:
        """True if ``a`` dominates ``b`` (reflexive); False for unreachable ``b``."""
        s = self.dom_sets.get(b)
        return s is not None and a in s

    def strictly_dominates(self, a, b) -> bool:
        return a != b and self.dominates(a, b)


def _rpo(g: Cfg) -> list:
    order: list = []
    seen = {g.entry}
    stack = [(g.entry, iter(g.succs[g.entry]))]
    while stack:
        node, it = stack[-1]
        for s in it:
            if s not in seen:
                seen.add(s)
                stack.append((s, iter(g.succs[s])))
                break
        else:
            stack.pop()
            order.append(node)
    order.reverse()
    return order


def dominators(g: Cfg) -> DomTree:
    """Iterative dataflow dominators; unreachable nodes get no entry."""
    order = _rpo(g)
    reach = set(order)
    dom: dict = {n: set(reach) for n in order}
    dom[g.entry] = {g.entry}
    changed = True
    while changed:
        changed = False
        for n in order:
            if n == g.entry:
                continue
            ps = [dom[p] for p in g.preds[n] if p in reach]
            new = set.intersection(*ps) | {n} if ps else {n}
            if new != dom[n]:
                dom[n] = new
                changed = True
    idom = {g.entry: g.entry}
    for n in order:
        if n == g.entry:
            continue
        strict = dom[n] - {n}
        # the immediate dominator is the strict dominator with the most dominators
        idom[n] = max(strict, key=lambda d: len(dom[d]))
    return DomTree(idom, {n: frozenset(s) for n, s in dom.items()})


# -- articulation points -------------------------------------------------------

def undirected_adjacency(g: Cfg, restrict: Optional[set] = None) -> dict:
    keep = g.reachable if restrict is None else restrict
    adj: dict = {n: set() for n in g.nodes if n in keep}
    for a, b in g.edges:
        if a in adj and b in adj and a != b:
            adj[a].add(b)
            adj[b].add(a)
    return adj


def articulation_points(g: Cfg) -> set:
    """Articulation points of the undirected view of the entry-reachable CFG."""
    adj = undirected_adjacency(g)
    disc: dict = {}
    low: dict = {}
    result: set = set()
    counter = 0
    for root in adj:
        if root in disc:
            continue
        disc[root] = low[root] = counter
        counter += 1
        root_children = 0
        stack = [(root, None, iter(sorted(adj[root], key=str)))]
        while stack:
            node, parent, it = stack[-1]
            advanced = False
            for nb in it:
                if nb == parent:
                    continue
                if nb in disc:
                    low[node] = min(low[node], disc[nb])
                else:
                    disc[nb] = low[nb] = counter
                    counter += 1
                    if node == root:
                        root_children += 1
                    stack.append((nb, node, iter(sorted(adj[nb], key=str))))
                    advanced = True
                    break
            if advanced:
                continue
            stack.pop()
            if parent is not None:
                low[parent] = min(low[parent], low[node])
                if parent != root and low[node] >= disc[parent]:
                    result.add(parent)
        if root_children > 1:
            result.add(root)
    return result


def separates(g: Cfg, node) -> bool:
    """True if removing ``node`` cuts everything reachable from it off from
    the rest of the reachable CFG (undirected view).

    This is the articulation condition with its degenerate cases included:
    when either side is empty (entry block, exit block) it holds trivially.
    """
    after = g.reachable_from(node, include_start=False) - {node}
    before = set(g.reachable) - after - {node}
    adj = undirected_adjacency(g)
    for a in after:
        if adj.get(a, set()) & before:
            return False
    return True


# -- loops ---------------------------------------------------------------------

@dataclass
class LoopInfo:
    back_edges: set
    loop_blocks: dict

    def in_loop(self, node) -> bool:
        return any(node in body for body in self.loop_blocks.values())

    def headers_of(self, node) -> set:
        return {h for h, body in self.loop_blocks.items() if node in body}


def loops(g: Cfg, d: DomTree) -> LoopInfo:
    back = {(t, h) for t, h in g.edges if t in g.reachable and d.dominates(h, t)}
    bodies: dict = {}
    for t, h in sorted(back, key=str):
        body = bodies.setdefault(h, {h})
        work = [t]
        while work:
            n = work.pop()
            if n in body:
                continue
            body.add(n)
            work.extend(p for p in g.preds[n] if p in g.reachable)
    return LoopInfo(back, bodies)


def bfs_distance(g: Cfg, start) -> dict:
    dist = {start: 0}
    q = deque([start])
    while q:
        n = q.popleft()
        for s in g.succs[n]:
            if s not in dist:
                dist[s] = dist[n] + 1
                q.append(s)
    return dist


# -- def-use -------------------------------------------------------------------

@dataclass
class DefUse:
    uses: dict
    defs: dict

    def uses_of(self, key: str) -> list[int]:
        return self.uses.get(key, [])


def def_use(f: Function) -> DefUse:
    """Index register and global uses in ``f``.

    Keys are ``%name`` for registers (including parameters and alloca slots)
    and ``@name`` for globals.  A use is listed once per operand slot.
    """
    uses: dict[str, list[int]] = {f"%{n}": [] for n, _ in f.params}
    defs: dict[str, Optional[int]] = {f"%{n}": None for n, _ in f.params}
    for inst in f.instructions():
        if inst.result is not None:
            defs[f"%{inst.result}"] = inst.id
            uses.setdefault(f"%{inst.result}", [])
    for inst in f.instructions():
        for o in inst.operands:
            if isinstance(o, Reg):
                uses.setdefault(f"%{o.name}", []).append(inst.id)
            elif isinstance(o, GlobalRef):
                uses.setdefault(f"@{o.name}", []).append(inst.id)
    return DefUse(uses, defs)


# -- call graph ----------------------------------------------------------------

@dataclass
class CallGraph:
    nodes: tuple
    edges: set  # (caller, callee, site id)
    address_taken: set
    indirect_sites: list = field(default_factory=list)
    addr_refs: set = field(default_factory=set)  # (function, referenced)

    def callees(self, name: str) -> set:
        return {b for a, b, _ in self.edges if a == name}


def call_graph(p: Program) -> CallGraph:
    names = {f.name for f in p.functions}
    edges: set = set()
    taken: set = set()
    addr_refs: set = set()
    indirect: list = []
    for f in p.functions:
        for inst in f.instructions():
            if inst.op == "call" and inst.operands[0].name in names:
                edges.add((f.name, inst.operands[0].name, inst.id))
            elif inst.op == "icall":
                indirect.append((f.name, inst.id))
            elif inst.op == "funcaddr":
                taken.add(inst.operands[0].name)
                addr_refs.add((f.name, inst.operands[0].name))
    return CallGraph(tuple(f.name for f in p.functions), edges, taken, indirect, addr_refs)


def reachable_from(cg: CallGraph, root: str = "main", through_address: bool = True) -> set:
    """Functions reachable from ``root`` by direct calls, and (by default)
    through address-taken references, which may be called indirectly."""
    succ: dict = {n: set() for n in cg.nodes}
    for a, b, _ in cg.edges:
        succ[a].add(b)
    if through_address:
        for a, b in cg.addr_refs:
            succ[a].add(b)
    seen: set = set()
    work = [root] if root in succ else []
    while work:
        n = work.pop()
        if n in seen:
            continue
        seen.add(n)
        work.extend(succ[n])
    return seen


# -- post-neck region ------------------------------------------------------------

def find_neck(p: Program) -> int:
    ids = p.neck_ids()
    if not ids:
        raise NoNeck("program has no neckmark")
    return ids[0]


def post_neck_blocks(p: Program, neck: int) -> tuple[Function, set, bool]:
    """Blocks of the neck function that run after the marker.

    Returns (function, labels strictly after the neck block, whether the neck
    block itself is re-entered).
    """
    loc = p.locate(neck)
    if loc is None or loc[1].insts[loc[2]].op != "neckmark":
        raise NoNeck(f"instruction {neck} is not a neckmark")
    fn, block, _ = loc
    g = build_cfg(fn)
    after = g.reachable_from(block.label, include_start=False)
    return fn, after, block.label in after


def post_neck_region(p: Program, neck: Optional[int] = None) -> set[int]:
    """Instruction ids that may execute after the neck."""
    if neck is None:
        neck = find_neck(p)
    fn, after, reentered = post_neck_blocks(p, neck)
    _, block, idx = p.locate(neck)
    region: set[int] = set()
    insts = []
    for b in fn.blocks:
        if b.label in after:
            insts.extend(b.insts)
        elif b.label == block.label:
            insts.extend(b.insts if reentered else b.insts[idx:])
    for inst in insts:
        region.add(inst.id)

    cg = call_graph(p)
    funcs = {f.name: f for f in p.functions}
    pending = []
    has_icall = False
    for inst in insts:
        if inst.op in ("call", "funcaddr") and isinstance(inst.operands[0], FuncRef):
            pending.append(inst.operands[0].name)
        elif inst.op == "icall":
            has_icall = True
    seen: set[str] = set()
    while True:
        while pending:
            name = pending.pop()
            if name in seen or name not in funcs:
                continue
            seen.add(name)
            for inst in funcs[name].instructions():
                region.add(inst.id)
                if inst.op in ("call", "funcaddr") and isinstance(inst.operands[0], FuncRef):
                    pending.append(inst.operands[0].name)
                elif inst.op == "icall":
                    has_icall = True
        if has_icall:
            # a pointer formed anywhere may be called here
            extra = [n for n in cg.address_taken if n not in seen]
            if extra:
                pending.extend(extra)
                continue
        break
    return region
