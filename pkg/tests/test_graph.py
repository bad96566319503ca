from __future__ import annotations

import numpy as np
import pytest

from tracescope import (
    CyclicGraphError,
    DependencyGraph,
    NodeSpec,
    NotFoundError,
    RawGraph,
    Role,
    assign_layers,
    contract,
    neighbors,
    order_layer,
    transitive_reduction,
)
from tracescope.store import canonical_json, graph_to_doc
from oracles import contracted_edges_oracle, random_dag, reachable_pairs


def diamond() -> DependencyGraph:
    graph = contract(RawGraph(
        vertices=frozenset("abcd"),
        edges=(("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")),
        named={v: v for v in "abcd"}))
    return assign_layers(graph)


class TestContract:
    def test_single_hidden_hop(self):
        raw = RawGraph(vertices=frozenset({"a", "x", "b"}),
                       edges=(("a", "x"), ("x", "b")),
                       named={"a": "a", "b": "b"})
        assert contract(raw).edges == (("a", "b"),)

    def test_named_interior_blocks_shortcut(self):
        raw = RawGraph(vertices=frozenset({"a", "b", "c"}),
                       edges=(("a", "b"), ("b", "c")),
                       named={"a": "a", "b": "b", "c": "c"})
        assert set(contract(raw).edges) == {("a", "b"), ("b", "c")}

    def test_variant_edge_lifts_to_node(self):
        # two raw vertices share one node; an edge to either creates the edge
        raw = RawGraph(vertices=frozenset({"a", "m1", "m2", "x"}),
                       edges=(("a", "x"), ("x", "m2")),
                       named={"a": "a", "m1": "m", "m2": "m"})
        assert contract(raw).edges == (("a", "m"),)

    def test_no_self_edges_between_variants(self):
        raw = RawGraph(vertices=frozenset({"m1", "x", "m2"}),
                       edges=(("m1", "x"), ("x", "m2")),
                       named={"m1": "m", "m2": "m"})
        assert contract(raw).edges == ()

    def test_cycle_reported_with_member(self):
        raw = RawGraph(vertices=frozenset({"a", "b"}),
                       edges=(("a", "b"), ("b", "a")),
                       named={"a": "a"})
        with pytest.raises(CyclicGraphError) as excinfo:
            contract(raw)
        assert excinfo.value.member in {"a", "b"}

    def test_variant_merge_cycle_rejected(self):
        # raw is acyclic but node-level contraction would produce m <-> n
        raw = RawGraph(vertices=frozenset({"m1", "m2", "n1", "n2"}),
                       edges=(("m1", "n1"), ("n2", "m2")),
                       named={"m1": "m", "m2": "m", "n1": "n", "n2": "n"})
        with pytest.raises(CyclicGraphError):
            contract(raw)

    def test_specs_applied(self):
        raw = RawGraph(vertices=frozenset({"a", "b"}), edges=(("a", "b"),),
                       named={"a": "in", "b": "out"})
        specs = {"in": NodeSpec("in", Role.INPUT), "out": NodeSpec("out", Role.OUTPUT)}
        graph = contract(raw, specs)
        assert graph.node("in").role is Role.INPUT

    def test_missing_spec_rejected(self):
        raw = RawGraph(vertices=frozenset({"a"}), edges=(), named={"a": "a"})
        with pytest.raises(NotFoundError):
            contract(raw, specs={})

    def test_idempotent_on_fully_named_graph(self):
        graph = diamond()
        raw = RawGraph(vertices=frozenset(graph.node_ids),
                       edges=graph.edges,
                       named={n: n for n in graph.node_ids})
        again = contract(raw, {n.node_id: n for n in graph.nodes})
        assert again.nodes == graph.nodes
        assert again.edges == graph.edges

    def test_matches_exhaustive_oracle_on_random_dags(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            vertices, edges, named = random_dag(rng)
            raw = RawGraph(vertices=vertices, edges=edges, named=named)
            expected = contracted_edges_oracle(vertices, edges, named)
            assert set(contract(raw).edges) == expected

    def test_reachability_preserved_for_named_pairs(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            vertices, edges, named = random_dag(rng, max_vertices=24, max_named=8)
            raw = RawGraph(vertices=vertices, edges=edges, named=named)
            graph = contract(raw)
            raw_reach = reachable_pairs(vertices, edges)
            node_reach = reachable_pairs(set(graph.node_ids), graph.edges)
            for u, node_u in named.items():
                for v, node_v in named.items():
                    if node_u == node_v:
                        continue
                    assert (((u, v) in raw_reach) == ((node_u, node_v) in node_reach))

    def test_deterministic_serialization(self):
        rng = np.random.default_rng(4)
        vertices, edges, named = random_dag(rng)
        raw = RawGraph(vertices=vertices, edges=edges, named=named)
        first = canonical_json(graph_to_doc(assign_layers(contract(raw))))
        shuffled = RawGraph(vertices=vertices,
                            edges=tuple(reversed(edges)),
                            named=dict(reversed(list(named.items()))))
        second = canonical_json(graph_to_doc(assign_layers(contract(shuffled))))
        assert first == second


class TestAssignLayers:
    def test_single_node(self):
        graph = assign_layers(DependencyGraph(nodes=(NodeSpec("a", Role.INPUT),),
                                              edges=()))
        assert graph.layer == {"a": 0}

    def test_diamond(self):
        graph = diamond()
        assert dict(graph.layer) == {"a": 0, "b": 1, "c": 1, "d": 2}

    def test_longest_path_dominates(self):
        # a->b->c plus shortcut a->c: c sits on layer 2, not 1
        graph = assign_layers(DependencyGraph(
            nodes=tuple(NodeSpec(n, Role.CALCULATED) for n in "abc"),
            edges=(("a", "b"), ("b", "c"), ("a", "c"))))
        assert graph.layer["c"] == 2

    def test_edges_strictly_increase_on_random_dags(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            vertices, edges, _ = random_dag(rng, max_vertices=30)
            graph = assign_layers(DependencyGraph(
                nodes=tuple(NodeSpec(v, Role.CALCULATED) for v in sorted(vertices)),
                edges=tuple(edges)))
            for u, v in graph.edges:
                assert graph.layer[v] >= graph.layer[u] + 1
            for node in graph.node_ids:
                if not any(v == node for _, v in graph.edges):
                    assert graph.layer[node] == 0


class TestOrderLayer:
    def test_lexicographic(self):
        assert order_layer({"loss", "input"}) == ["input", "loss"]

    def test_idempotent(self):
        assert order_layer(["a", "b"]) == ["a", "b"]

    def test_permutation_invariant(self):
        assert order_layer(["b", "c", "a"]) == order_layer(["c", "a", "b"])


class TestNeighbors:
    def test_diamond_source(self):
        preds, succs = neighbors(diamond(), "a")
        assert preds == []
        assert succs == ["b", "c"]

    def test_diamond_sink(self):
        preds, succs = neighbors(diamond(), "d")
        assert preds == ["b", "c"]
        assert succs == []

    def test_unknown_node(self):
        with pytest.raises(NotFoundError):
            neighbors(diamond(), "ghost")

    def test_matches_edge_scan_on_random_dags(self):
        rng = np.random.default_rng(23)
        for _ in range(25):
            vertices, edges, _ = random_dag(rng, max_vertices=25)
            graph = assign_layers(DependencyGraph(
                nodes=tuple(NodeSpec(v, Role.CALCULATED) for v in sorted(vertices)),
                edges=tuple(edges)))
            for node in graph.node_ids:
                preds, succs = neighbors(graph, node)
                assert set(preds) == {u for u, v in edges if v == node}
                assert set(succs) == {v for u, v in edges if u == node}
                key = lambda n: (graph.layer[n], n)
                assert preds == sorted(preds, key=key)
                assert succs == sorted(succs, key=key)


class TestTransitiveReduction:
    def test_removes_shortcut(self):
        graph = assign_layers(DependencyGraph(
            nodes=tuple(NodeSpec(n, Role.CALCULATED) for n in "abc"),
            edges=(("a", "b"), ("b", "c"), ("a", "c"))))
        reduced = transitive_reduction(graph)
        assert set(reduced.edges) == {("a", "b"), ("b", "c")}
        assert dict(reduced.layer) == dict(graph.layer)

    def test_preserves_reachability(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            vertices, edges, _ = random_dag(rng, max_vertices=20)
            graph = DependencyGraph(
                nodes=tuple(NodeSpec(v, Role.CALCULATED) for v in sorted(vertices)),
                edges=tuple(edges))
            reduced = transitive_reduction(graph)
            assert reachable_pairs(set(graph.node_ids), graph.edges) == \
                reachable_pairs(set(reduced.node_ids), reduced.edges)
