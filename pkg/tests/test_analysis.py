import random

import pytest
from hypothesis import given, settings, strategies as st

from debloatkit.analysis import (
    Cfg, NoNeck, articulation_points, bfs_distance, build_cfg, call_graph, def_use,
    dominators, loops, post_neck_region, reachable_from, separates,
)
from debloatkit.ir import insert_neck_marker, parse_program

from oracles import (
    articulation_by_removal, dominators_by_paths, floyd_warshall_hops, idoms_from_sets,
    random_digraph, reach,
)

DIAMOND = Cfg.from_edges("eABj", [("e", "A"), ("e", "B"), ("A", "j"), ("B", "j")], "e")


def test_single_block_cfg():
    p = parse_program("fn @f() {\nentry:\n  ret\n}\n")
    g = build_cfg(p.function("f"))
    assert g.nodes == ("entry",) and g.edges == []


def test_diamond_cfg_and_dominators():
    assert len(DIAMOND.nodes) == 4 and len(DIAMOND.edges) == 4
    d = dominators(DIAMOND)
    assert d.idom["A"] == d.idom["B"] == d.idom["j"] == "e"


def test_chain_dominators_and_distance():
    g = Cfg.from_edges(["e", "x", "y"], [("e", "x"), ("x", "y")], "e")
    assert dominators(g).idom["y"] == "x"
    dist = bfs_distance(g, "e")
    assert dist == {"e": 0, "x": 1, "y": 2}


def test_unreachable_nodes_flagged():
    g = Cfg.from_edges(["e", "x", "z"], [("e", "x"), ("z", "x")], "e")
    assert g.unreachable == {"z"}
    assert "z" not in dominators(g).idom
    assert "z" not in bfs_distance(g, "e")


def test_path_articulation():
    g = Cfg.from_edges("abc", [("a", "b"), ("b", "c")], "a")
    assert articulation_points(g) == {"b"}


def test_diamond_articulation():
    assert articulation_points(DIAMOND) == set()
    tails = Cfg.from_edges("xeABjy", [("x", "e"), ("e", "A"), ("e", "B"), ("A", "j"), ("B", "j"),
                                      ("j", "y")], "x")
    assert articulation_points(tails) == {"e", "j"}


@pytest.mark.parametrize("seed", range(50))
def test_dominators_match_path_oracle(seed):
    rng = random.Random(seed)
    nodes, edges = random_digraph(rng, 10)
    g = Cfg.from_edges(nodes, edges, 0)
    d = dominators(g)
    oracle = dominators_by_paths(nodes, edges, 0)
    assert set(d.dom_sets) == set(oracle)
    for n, s in oracle.items():
        assert set(d.dom_sets[n]) == s
    assert {k: v for k, v in d.idom.items()} == idoms_from_sets(oracle)


@pytest.mark.parametrize("seed", range(100))
def test_articulation_match_removal_oracle(seed):
    rng = random.Random(1000 + seed)
    nodes, edges = random_digraph(rng, 12, p=0.2)
    g = Cfg.from_edges(nodes, edges, 0)
    assert articulation_points(g) == articulation_by_removal(nodes, edges, 0)


@pytest.mark.parametrize("seed", range(30))
def test_bfs_matches_floyd_warshall(seed):
    rng = random.Random(2000 + seed)
    nodes, edges = random_digraph(rng, 12, p=0.2)
    g = Cfg.from_edges(nodes, edges, 0)
    fw = floyd_warshall_hops(nodes, edges)
    dist = bfs_distance(g, 0)
    for n in nodes:
        if fw[0, n] == float("inf"):
            assert n not in dist
        else:
            assert dist[n] == fw[0, n]


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 9).flatmap(lambda n: st.tuples(
    st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=20))))
def test_dominance_properties(graph):
    n, edges = graph
    g = Cfg.from_edges(range(n), edges, 0)
    d = dominators(g)
    live = reach(list(range(n)), edges, 0)
    for v in live:
        assert d.dominates(0, v) and d.dominates(v, v)
        for w in live:
            if v != w and d.dominates(v, w):
                assert not d.dominates(w, v)
            for x in live:
                if d.dominates(v, w) and d.dominates(w, x):
                    assert d.dominates(v, x)
    dist = bfs_distance(g, 0)
    for a, b in g.edges:
        if a in dist:
            assert dist[b] <= dist[a] + 1
    li = loops(g, d)
    for h, body in li.loop_blocks.items():
        for b in body:
            assert d.dominates(h, b)


def test_self_loop():
    g = Cfg.from_edges(["e", "L", "x"], [("e", "L"), ("L", "L"), ("L", "x")], "e")
    li = loops(g, dominators(g))
    assert li.back_edges == {("L", "L")}
    assert li.loop_blocks == {"L": {"L"}}


def test_acyclic_has_no_loops():
    assert loops(DIAMOND, dominators(DIAMOND)).back_edges == set()


def test_wc_loops(wc):
    g = build_cfg(wc.function("main"))
    li = loops(g, dominators(g))
    assert set(li.loop_blocks) == {"args_cond", "read_cond"}
    assert not li.in_loop("read_pre")


def test_separates_degenerate_cases():
    g = Cfg.from_edges("abc", [("a", "b"), ("b", "c")], "a")
    assert separates(g, "a") and separates(g, "b") and separates(g, "c")
    assert not separates(DIAMOND, "A")


def test_def_use_counts_each_slot():
    p = parse_program("fn @f() -> int {\nentry:\n  %x = alloca int\n  %a = const 1\n"
                      "  %b = add %a, %a\n  ret %b\n}\n")
    du = def_use(p.function("f"))
    assert du.uses_of("%x") == []
    assert du.uses_of("%a") == [3, 3]


def test_wc_total_chars_uses_guarded(wc):
    main = wc.function("main")
    du = def_use(main)
    labels = {i.id: b.label for b in main.blocks for i in b.insts}
    assert {labels[i] for i in du.uses_of("@total_chars")} == {"count_chars", "print_chars"}


def test_call_graph():
    p = parse_program("""fn @g() {
entry:
  ret
}
fn @h() {
entry:
  ret
}
fn @f() {
entry:
  call @g
  ret
}
fn @main(%argc: int, %argv: ptr<ptr<byte>>) -> int {
entry:
  call @f
  %fp = funcaddr @h
  ret 0
}
""")
    cg = call_graph(p)
    assert {(a, b) for a, b, _ in cg.edges} == {("main", "f"), ("f", "g")}
    assert cg.address_taken == {"h"}
    assert reachable_from(cg, "main") == {"main", "f", "g", "h"}
    assert reachable_from(cg, "main", through_address=False) == {"main", "f", "g"}


def test_wc_call_graph(wc):
    assert ("main", "decodeChar") in {(a, b) for a, b, _ in call_graph(wc).edges}


def test_post_neck_region_entry_and_ret():
    p = parse_program("fn @main(%argc: int, %argv: ptr<ptr<byte>>) -> int {\nentry:\n"
                      "  %a = const 1\n  ret %a\n}\n")
    with pytest.raises(NoNeck):
        post_neck_region(p)
    at_entry = insert_neck_marker(p, 1)
    assert post_neck_region(at_entry) == {i.id for _, _, i in at_entry.instructions()}
    before_ret = insert_neck_marker(p, 2)
    assert post_neck_region(before_ret) == {2, 3}


def test_wc_post_neck_region(wc):
    main = wc.function("main")
    necked = insert_neck_marker(wc, main.block("read_pre").insts[0].id)
    region = post_neck_region(necked)
    nm = necked.function("main")
    for label in ("read_cond", "read_body", "print_lines", "print_chars"):
        assert {i.id for i in nm.block(label).insts} <= region
    assert {i.id for i in necked.function("decodeChar").instructions()} <= region
    assert not {i.id for i in nm.block("args_body").insts} & region
