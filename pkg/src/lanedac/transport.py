"""Exact transportation-problem solver (primal simplex on the basis tree).

The basis of an ``m x n`` transportation problem is a spanning tree over the
``m`` supply and ``n`` demand nodes with ``m + n - 1`` cells. Each pivot
prices the non-basic cells with node potentials, brings in the most negative
one and pushes flow around the unique cycle it closes.
"""

from __future__ import annotations

from collections import deque

import numpy as np

BALANCE_TOL = 1e-9


class InfeasibleTransport(ValueError):
    pass


def _least_cost_start(a: np.ndarray, b: np.ndarray, cost: np.ndarray):
    """Greedy cheapest-cell allocation; crosses out one line per cell so the
    ``m + n - 1`` chosen cells form a spanning tree."""
    m, n = len(a), len(b)
    ra, rb = a.copy(), b.copy()
    row_open = np.ones(m, dtype=bool)
    col_open = np.ones(n, dtype=bool)
    rows_left, cols_left = m, n
    flow = np.zeros((m, n))
    basis = []
    for k in np.argsort(cost, axis=None, kind="stable"):
        i, j = divmod(int(k), n)
        if not (row_open[i] and col_open[j]):
            continue
        x = min(ra[i], rb[j])
        flow[i, j] = x
        ra[i] -= x
        rb[j] -= x
        basis.append((i, j))
        if rows_left == 1 and cols_left == 1:
            break
        if (ra[i] <= rb[j] and rows_left > 1) or cols_left == 1:
            row_open[i] = False
            rows_left -= 1
            rb[j] += ra[i]  # keep rounding residue in play
            ra[i] = 0.0
        else:
            col_open[j] = False
            cols_left -= 1
            ra[i] += rb[j]
            rb[j] = 0.0
    return flow, basis


def _adjacency(basis, m, n):
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _potentials(basis, cost, m, n):
    adj = _adjacency(basis, m, n)
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    q = deque([0])
    while q:
        u = q.popleft()
        for w in adj[u]:
            if np.isnan(pot[w]):
                i, j = (u, w - m) if u < m else (w, u - m)
                c = cost[i, j]
                pot[w] = c - pot[u]
                q.append(w)
    return pot[:m], pot[m:]


def _tree_path(basis, m, n, src, dst):
    adj = _adjacency(basis, m, n)
    parent = {src: None}
    q = deque([src])
    while q:
        u = q.popleft()
        if u == dst:
            break
        for w in adj[u]:
            if w not in parent:
                parent[w] = u
                q.append(w)
    path = [dst]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def solve_transport(a, b, cost, max_iter: int = 100000):
    """Minimum-cost flow from supplies ``a`` to demands ``b``.

    Returns ``(flow, total_cost)``. Raises :class:`InfeasibleTransport` when
    the totals differ by more than ``BALANCE_TOL``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = len(a), len(b)
    if cost.shape != (m, n):
        raise ValueError(f"cost must be {(m, n)}, got {cost.shape}")
    if m == 0 or n == 0:
        raise ValueError("empty transport problem")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("supplies and demands must be non-negative")
    if abs(a.sum() - b.sum()) > BALANCE_TOL:
        raise InfeasibleTransport(f"unbalanced masses {a.sum()!r} vs {b.sum()!r}")

    flow, basis = _least_cost_start(a, b, cost)
    in_basis = np.zeros((m, n), dtype=bool)
    for c in basis:
        in_basis[c] = True
    scale = max(1.0, float(np.abs(cost).max()))
    tol = 1e-12 * scale
    degenerate_run = 0
    for _ in range(max_iter):
        u, v = _potentials(basis, cost, m, n)
        reduced = cost - u[:, None] - v[None, :]
        reduced[in_basis] = 0.0
        if degenerate_run > m + n:
            # Bland's rule once pivots stall, to rule out cycling.
            neg = np.flatnonzero(reduced.ravel() < -tol)
            if len(neg) == 0:
                break
            ei, ej = divmod(int(neg[0]), n)
        else:
            k = int(np.argmin(reduced))
            ei, ej = divmod(k, n)
            if reduced[ei, ej] >= -tol:
                break
        path = _tree_path(basis, m, n, ei, m + ej)
        cells = []
        for s, t in zip(path[:-1], path[1:]):
            cells.append((s, t - m) if s < m else (t, s - m))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leave = min((c for c in minus if flow[c] == theta))
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[ei, ej] += theta
        flow[leave] = 0.0
        basis.remove(leave)
        in_basis[leave] = False
        basis.append((ei, ej))
        in_basis[ei, ej] = True
        degenerate_run = degenerate_run + 1 if theta == 0.0 else 0
    else:
        raise RuntimeError("transport simplex did not converge")
    flow = np.maximum(flow, 0.0)
    return flow, float(np.sum(flow * cost))


def emd(points, weights, samples, sample_weights=None) -> float:
    """Earth mover's distance with Euclidean ground cost.

    ``points``/``weights`` describe the predicted distribution; ``samples``
    are ground-truth draws, weighted uniformly unless ``sample_weights`` is
    given.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    s = np.atleast_2d(np.asarray(samples, dtype=float))
    w = np.asarray(weights, dtype=float)
    sw = np.full(len(s), 1.0 / len(s)) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    cost = np.sqrt(np.sum((p[:, None, :] - s[None, :, :]) ** 2, axis=-1))
    return solve_transport(w, sw, cost)[1]
