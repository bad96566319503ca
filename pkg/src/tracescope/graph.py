"""Contraction of raw computation DAGs onto named-tensor dependency graphs.

The contraction keeps every edge implied by a raw path whose interior
vertices are all unnamed; it does not transitively reduce (a reduced view is
available separately as a display option).  Layout is layers plus a stable
ordering; anything fancier is the UI's job.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import CyclicGraphError, InvariantViolation, NotFoundError
from .model import DependencyGraph, NodeSpec, Role


@dataclass(frozen=True)
class RawGraph:
    """A raw computation DAG with a partial vertex -> node_id naming.

    Multiple raw vertices may share one node_id; they are that node's
    variants and collapse into a single rectangle in the GUI.
    """

    vertices: frozenset[str]
    edges: tuple[tuple[str, str], ...]
    named: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", frozenset(self.vertices))
        object.__setattr__(self, "edges",
                           tuple((str(u), str(v)) for u, v in self.edges))
        for u, v in self.edges:
            if u not in self.vertices or v not in self.vertices:
                raise InvariantViolation(
                    f"RawGraph edge ({u!r}, {v!r}) references undeclared vertices")
        named = dict(self.named)
        for vertex, node_id in named.items():
            if vertex not in self.vertices:
                raise InvariantViolation(
                    f"RawGraph names unknown vertex {vertex!r}")
            if not node_id:
                raise InvariantViolation("RawGraph node_ids must be nonempty")
        object.__setattr__(self, "named", MappingProxyType(named))


def _check_acyclic(vertices: Iterable[str], edges: Iterable[tuple[str, str]]) -> None:
    indegree = {v: 0 for v in vertices}
    succs: dict[str, list[str]] = {v: [] for v in indegree}
    for u, v in edges:
        indegree[v] += 1
        succs[u].append(v)
    ready = [v for v, d in indegree.items() if d == 0]
    seen = 0
    while ready:
        vertex = ready.pop()
        seen += 1
        for nxt in succs[vertex]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                ready.append(nxt)
    if seen != len(indegree):
        remaining = sorted(v for v, d in indegree.items() if d > 0)
        raise CyclicGraphError(
            f"graph contains a cycle through {remaining[0]!r}", member=remaining[0])


def contract(raw: RawGraph, specs: Mapping[str, NodeSpec] | None = None) -> DependencyGraph:
    """Contract a raw DAG onto its named vertices.

    An edge (u, v) exists in the result iff some raw path leads from a vertex
    of u to a vertex of v with only unnamed interior vertices.  Edges between
    variants of one node are dropped.  ``specs`` supplies the NodeSpec per
    node_id; without it nodes default to Role.CALCULATED with one variant.
    """
    _check_acyclic(raw.vertices, raw.edges)

    succs: dict[str, list[str]] = {v: [] for v in raw.vertices}
    for u, v in raw.edges:
        succs[u].append(v)

    node_ids = sorted(set(raw.named.values()))
    node_of = raw.named
    edges: set[tuple[str, str]] = set()
    for start in sorted(raw.named):
        src_node = node_of[start]
        visited: set[str] = set()
        frontier = [start]
        while frontier:
            vertex = frontier.pop()
            for nxt in succs[vertex]:
                dst_node = node_of.get(nxt)
                if dst_node is not None:
                    if dst_node != src_node:
                        edges.add((src_node, dst_node))
                elif nxt not in visited:
                    visited.add(nxt)
                    frontier.append(nxt)

    if specs is None:
        nodes = tuple(NodeSpec(node_id, Role.CALCULATED) for node_id in node_ids)
    else:
        missing = [n for n in node_ids if n not in specs]
        if missing:
            raise NotFoundError(f"no NodeSpec given for named nodes {missing}")
        nodes = tuple(specs[node_id] for node_id in node_ids)

    try:
        return DependencyGraph(nodes=nodes, edges=tuple(sorted(edges)))
    except InvariantViolation as exc:
        # raw acyclicity does not guarantee node-level acyclicity once
        # variants of one node merge; surface that as a graph error
        if "acyclic" in str(exc):
            raise CyclicGraphError(
                "variant merging produced a cycle between named nodes") from exc
        raise


def assign_layers(graph: DependencyGraph) -> DependencyGraph:
    """Return the graph with layer(v) = longest path length from any source."""
    preds: dict[str, list[str]] = {n: [] for n in graph.node_ids}
    succs: dict[str, list[str]] = {n: [] for n in graph.node_ids}
    indegree = {n: 0 for n in graph.node_ids}
    for u, v in graph.edges:
        preds[v].append(u)
        succs[u].append(v)
        indegree[v] += 1

    layer: dict[str, int] = {}
    ready = sorted(n for n, d in indegree.items() if d == 0)
    order: list[str] = []
    while ready:
        node = ready.pop()
        order.append(node)
        for nxt in succs[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                ready.append(nxt)
    for node in order:
        layer[node] = max((layer[p] + 1 for p in preds[node]), default=0)
    return DependencyGraph(nodes=graph.nodes, edges=graph.edges, layer=layer)


def order_layer(node_ids: Iterable[str]) -> list[str]:
    """Stable display order of the nodes within one layer."""
    return sorted(node_ids)


def neighbors(graph: DependencyGraph, node_id: str) -> tuple[list[str], list[str]]:
    """Predecessors and successors of a node, each ordered by (layer, id)."""
    if not graph.has_node(node_id):
        raise NotFoundError(f"unknown node {node_id!r}")
    preds = [u for u, v in graph.edges if v == node_id]
    succs = [v for u, v in graph.edges if u == node_id]
    key = lambda n: (graph.layer.get(n, 0), n)
    return sorted(preds, key=key), sorted(succs, key=key)


def transitive_reduction(graph: DependencyGraph) -> DependencyGraph:
    """Drop edges implied by longer paths; optional display simplification.

    Longest-path layers survive reduction unchanged, so the layer map is kept.
    """
    succs: dict[str, set[str]] = {n: set() for n in graph.node_ids}
    for u, v in graph.edges:
        succs[u].add(v)

    reach: dict[str, set[str]] = {}

    def reachable(node: str) -> set[str]:
        if node not in reach:
            acc: set[str] = set()
            for nxt in succs[node]:
                acc.add(nxt)
                acc |= reachable(nxt)
            reach[node] = acc
        return reach[node]

    kept = []
    for u, v in graph.edges:
        if not any(v in reachable(w) for w in succs[u] if w != v):
            kept.append((u, v))
    return DependencyGraph(nodes=graph.nodes, edges=tuple(sorted(kept)),
                           layer=dict(graph.layer))
