"""Independent oracles the tests check the implementation against.

Everything here deliberately uses a different algorithm (or at least a
different code path) than the package: two-pass statistics built on fsum,
Floyd-Warshall reachability for graph contraction, direct threshold
iteration for the recording schedule, and central finite differences for
gradients.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


# -- statistics -------------------------------------------------------------

def two_pass_stats(values) -> dict:
    """Classic two-pass mean/std plus every other stat, via exact fsum."""
    flat = [float(v) for v in np.asarray(values, dtype=np.float64).ravel()]
    count = len(flat)
    finite = [v for v in flat if math.isfinite(v)]
    count_nan = sum(1 for v in flat if math.isnan(v))
    count_inf = sum(1 for v in flat if math.isinf(v))
    k = len(finite)
    if k == 0:
        nan = float("nan")
        return dict(count=count, mean=nan, std=nan, abs_mean=nan, min=nan, max=nan,
                    l2_norm=0.0, frac_zero=0.0, count_nan=count_nan, count_inf=count_inf)
    mean = math.fsum(finite) / k
    variance = math.fsum((v - mean) ** 2 for v in finite) / k
    return dict(
        count=count,
        mean=mean,
        std=math.sqrt(variance),
        abs_mean=math.fsum(abs(v) for v in finite) / k,
        min=min(finite),
        max=max(finite),
        l2_norm=math.sqrt(math.fsum(v * v for v in finite)),
        frac_zero=sum(1 for v in finite if v == 0.0) / k,
        count_nan=count_nan,
        count_inf=count_inf,
    )


def assert_stats_close(stats, expected: dict, rel: float = 1e-9) -> None:
    for name in ("count", "count_nan", "count_inf"):
        assert getattr(stats, name) == expected[name], name
    for name in ("mean", "std", "abs_mean", "min", "max", "l2_norm", "frac_zero"):
        got = getattr(stats, name)
        want = expected[name]
        if math.isnan(want):
            assert math.isnan(got), name
        else:
            assert abs(got - want) <= rel * (1.0 + abs(want)), (
                f"{name}: got {got}, expected {want}")


# -- graph contraction ------------------------------------------------------

def contracted_edges_oracle(vertices, edges, named) -> set[tuple[str, str]]:
    """Edge set via Floyd-Warshall closure over the unnamed-only subgraph.

    A path u ~> v with unnamed interior exists iff there is a direct edge, or
    an edge u->a, closure a ~> b through unnamed vertices only, and edge b->v.
    """
    unnamed = sorted(v for v in vertices if v not in named)
    pos = {v: i for i, v in enumerate(unnamed)}
    n = len(unnamed)
    reach = [[False] * n for _ in range(n)]
    for i in range(n):
        reach[i][i] = True
    for u, v in edges:
        if u in pos and v in pos:
            reach[pos[u]][pos[v]] = True
    for k in range(n):
        for i in range(n):
            if reach[i][k]:
                row_k = reach[k]
                row_i = reach[i]
                for j in range(n):
                    if row_k[j]:
                        row_i[j] = True

    out: set[tuple[str, str]] = set()
    edge_list = list(edges)
    for u, v in edge_list:
        if u in named and v in named and named[u] != named[v]:
            out.add((named[u], named[v]))
    starts = [(u, v) for u, v in edge_list if u in named and v in pos]
    ends = [(u, v) for u, v in edge_list if u in pos and v in named]
    for u, a in starts:
        for b, v in ends:
            if named[u] != named[v] and reach[pos[a]][pos[b]]:
                out.add((named[u], named[v]))
    return out


def reachable_pairs(vertices, edges) -> set[tuple[str, str]]:
    """Transitive closure by repeated DFS; used for reachability preservation."""
    succs: dict[str, list[str]] = {v: [] for v in vertices}
    for u, v in edges:
        succs[u].append(v)
    out = set()
    for start in vertices:
        stack = list(succs[start])
        seen = set()
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            out.add((start, v))
            stack.extend(succs[v])
    return out


def random_dag(rng: np.random.Generator, max_vertices: int = 40,
               max_named: int = 12, density_lo: float = 0.1,
               density_hi: float = 0.4):
    """A random DAG over a shuffled topological order, plus a partial naming."""
    n = int(rng.integers(2, max_vertices + 1))
    order = [f"v{i}" for i in range(n)]
    density = float(rng.uniform(density_lo, density_hi))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                edges.append((order[i], order[j]))
    named_count = int(rng.integers(1, min(max_named, n) + 1))
    named_vertices = rng.choice(n, size=named_count, replace=False)
    named = {order[int(i)]: f"n{int(i)}" for i in named_vertices}
    return frozenset(order), tuple(edges), named


# -- recording schedule -----------------------------------------------------

def schedule_oracle(growth, limit: int) -> list[int]:
    """All recorded occurrence indices below ``limit`` by direct iteration."""
    g = Fraction(str(growth)) if not isinstance(growth, Fraction) else growth
    out = []
    r = 0
    while r < limit:
        out.append(r)
        r = max(r + 1, (r * g.numerator) // g.denominator)
    return out


# -- gradients ----------------------------------------------------------------

def finite_difference_param_grads(model, batch, loss_id: str,
                                  eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of one loss over all flattened parameters."""
    from tracescope import toytrain

    attr = {"main": "loss_main", "aux": "loss_aux",
            "combined": "loss_combined"}[loss_id]

    def loss_at(flat: np.ndarray) -> float:
        probe = toytrain.ToyModel(hidden_width=model.hidden_width,
                                  w1=model.w1.copy(), b1=model.b1.copy(),
                                  w2=model.w2.copy(), b2=model.b2.copy())
        probe.set_flat_params(flat)
        return float(getattr(toytrain.forward(probe, batch), attr))

    base = model.flat_params()
    grads = np.empty_like(base)
    for i in range(base.size):
        plus = base.copy()
        minus = base.copy()
        plus[i] += eps
        minus[i] -= eps
        grads[i] = (loss_at(plus) - loss_at(minus)) / (2.0 * eps)
    return grads


def grads_match(manual: np.ndarray, fd: np.ndarray, rel: float = 1e-6,
                abs_floor: float = 2e-9) -> bool:
    """Relative agreement with a small absolute floor for the FD noise."""
    diff = np.abs(manual - fd)
    scale = np.maximum(np.abs(manual), np.abs(fd))
    return bool(np.all((diff <= rel * scale) | (diff <= abs_floor)))
