"""Exact transport LP on tiny instances by enumerating every basic solution."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import ArgumentError, TransportPlan, _as_array

MAX_N = 4
NEG_TOL = 1e-12


@dataclass(frozen=True)
class LpSolution:
    plan: TransportPlan
    cost: float
    basis: tuple[tuple[int, int], ...]


def _is_tree(cells, n) -> bool:
    parent = list(range(2 * n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in cells:
        a, b = find(i), find(n + j)
        if a == b:
            return False
        parent[a] = b
    return True


def _peel(cells, n) -> np.ndarray:
    """Coefficients expressing each basic variable in terms of ``(r; c)``.

    Repeatedly takes a node of degree one: its single cell must carry the
    node's remaining demand.
    """
    m = len(cells)
    coef = np.zeros((m, 2 * n), dtype=np.int64)
    # residual demand of each node, as an integer combination of (r; c)
    demand = np.eye(2 * n, dtype=np.int64)
    incident = {v: set() for v in range(2 * n)}
    for k, (i, j) in enumerate(cells):
        incident[i].add(k)
        incident[n + j].add(k)
    alive = set(range(m))
    while alive:
        node = next(v for v in range(2 * n) if len(incident[v]) == 1)
        k = incident[node].pop()
        i, j = cells[k]
        other = n + j if node == i else i
        coef[k] = demand[node]
        demand[other] = demand[other] - coef[k]
        incident[other].discard(k)
        alive.discard(k)
    return coef


@lru_cache(maxsize=None)
def spanning_trees(n: int) -> tuple[tuple, np.ndarray]:
    """All spanning trees of ``K_{n,n}`` in lexicographic cell order and
    their basic-solution maps, stacked as ``(trees, 2n-1, 2n)``."""
    cells = [(i, j) for i in range(n) for j in range(n)]
    trees = tuple(sub for sub in itertools.combinations(cells, 2 * n - 1) if _is_tree(sub, n))
    maps = np.stack([_peel(t, n) for t in trees]).astype(float)
    return trees, maps


def _basic_solutions(r, c):
    n = r.size
    trees, maps = spanning_trees(n)
    b = np.concatenate([r, c])
    vals = maps @ b
    ok = np.all(vals >= -NEG_TOL, axis=1)
    return trees, np.clip(vals, 0.0, None), ok


def _plan(tree, vals, n) -> np.ndarray:
    X = np.zeros((n, n))
    for (i, j), x in zip(tree, vals):
        X[i, j] = x
    return X


def exact_ot_lp(C, r, c) -> LpSolution:
    """Minimum-cost vertex of the transportation polytope (``n <= 4``).

    Ties go to the lexicographically smallest basis.
    """
    Ca, r, c = _as_array(C), _as_array(r), _as_array(c)
    n = r.size
    if n > MAX_N:
        raise ArgumentError(f"enumeration is limited to n <= {MAX_N}, got {n}")
    if Ca.shape != (n, n) or c.shape != (n,):
        raise ArgumentError("cost and marginals disagree in size")
    if abs(r.sum() - c.sum()) > 1e-12:
        raise ArgumentError("marginals must have equal mass")
    trees, vals, ok = _basic_solutions(r, c)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        raise ArgumentError("no feasible basic solution; marginals must have equal mass")
    rows = np.array([[i for i, _ in t] for t in trees])
    cols = np.array([[j for _, j in t] for t in trees])
    costs = np.einsum("tk,tk->t", vals[idx], Ca[rows[idx], cols[idx]])
    best = idx[int(np.flatnonzero(costs <= costs.min() + 1e-14)[0])]
    X = _plan(trees[best], vals[best], n)
    return LpSolution(TransportPlan.checked(X, r, c), float((Ca * X).sum()), trees[best])


def enumerate_vertices(r, c) -> list[np.ndarray]:
    """Distinct vertices of the transportation polytope (degenerate ones kept once)."""
    r, c = _as_array(r), _as_array(c)
    n = r.size
    if n > MAX_N:
        raise ArgumentError(f"enumeration is limited to n <= {MAX_N}, got {n}")
    trees, vals, ok = _basic_solutions(r, c)
    out: list[np.ndarray] = []
    for k in np.flatnonzero(ok):
        X = _plan(trees[k], vals[k], n)
        if not any(np.abs(X - Y).max() <= 1e-12 for Y in out):
            out.append(X)
    return out
