"""Brute-force reference implementations used to check the graph analyses."""

import itertools
import random


def random_digraph(rng: random.Random, max_nodes: int, p: float = 0.3):
    n = rng.randint(1, max_nodes)
    nodes = list(range(n))
    edges = [(a, b) for a in nodes for b in nodes if rng.random() < p]
    return nodes, edges


def reach(nodes, edges, start, removed=None):
    succ = {n: [] for n in nodes}
    for a, b in edges:
        succ[a].append(b)
    if start == removed:
        return set()
    seen = {start}
    work = [start]
    while work:
        for s in succ[work.pop()]:
            if s != removed and s not in seen:
                seen.add(s)
                work.append(s)
    return seen


def dominators_by_paths(nodes, edges, entry):
    """d dominates n iff d lies on every simple entry->n path."""
    succ = {n: [] for n in nodes}
    for a, b in edges:
        if b not in succ[a]:
            succ[a].append(b)
    on_all = {}

    def walk(node, path):
        s = set(path)
        on_all[node] = s if node not in on_all else on_all[node] & s
        for nxt in succ[node]:
            if nxt not in s:
                path.append(nxt)
                walk(nxt, path)
                path.pop()

    walk(entry, [entry])
    return on_all


def idoms_from_sets(dom):
    idom = {}
    for n, ds in dom.items():
        strict = ds - {n}
        if not strict:
            idom[n] = n
            continue
        # the strict dominator that every other strict dominator dominates
        idom[n] = next(d for d in strict if all(o in dom[d] for o in strict))
    return idom


def articulation_by_removal(nodes, edges, entry):
    live = reach(nodes, edges, entry)
    und = {n: set() for n in live}
    for a, b in edges:
        if a in live and b in live and a != b:
            und[a].add(b)
            und[b].add(a)
    out = set()
    for v in live:
        rest = live - {v}
        if len(rest) < 2:
            continue
        start = next(iter(rest))
        seen = {start}
        work = [start]
        while work:
            for nb in und[work.pop()]:
                if nb != v and nb not in seen:
                    seen.add(nb)
                    work.append(nb)
        if seen != rest:
            out.add(v)
    return out


def floyd_warshall_hops(nodes, edges):
    inf = float("inf")
    d = {(a, b): (0 if a == b else inf) for a, b in itertools.product(nodes, nodes)}
    for a, b in edges:
        if a != b:
            d[a, b] = 1
    for k in nodes:
        for i in nodes:
            for j in nodes:
                if d[i, k] + d[k, j] < d[i, j]:
                    d[i, j] = d[i, k] + d[k, j]
    return d
