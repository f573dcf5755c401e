import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from lanedac.transport import InfeasibleTransport, emd, solve_transport


def enumerate_vertices(a, b, cost):
    """Minimum over every basic feasible solution (tiny instances only)."""
    m, n = len(a), len(b)
    cells = list(itertools.product(range(m), range(n)))
    rows = []
    for i in range(m):
        rows.append([1.0 if c[0] == i else 0.0 for c in cells])
    for j in range(n):
        rows.append([1.0 if c[1] == j else 0.0 for c in cells])
    A = np.array(rows)
    rhs = np.concatenate([a, b])
    best = np.inf
    for basis in itertools.combinations(range(len(cells)), m + n - 1):
        sub = A[:, basis]
        if np.linalg.matrix_rank(sub) < m + n - 1:
            continue
        x, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.max(np.abs(sub @ x - rhs)) > 1e-9 or np.min(x) < -1e-12:
            continue
        best = min(best, float(sum(x[k] * cost[cells[c]] for k, c in enumerate(basis))))
    return best


def lp_oracle(a, b, cost):
    m, n = cost.shape
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    res = linprog(cost.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


def random_instance(rng, m, n):
    a = rng.random(m) + 0.05
    b = rng.random(n) + 0.05
    a /= a.sum()
    b /= b.sum()
    b[-1] = 1.0 - b[:-1].sum()
    cost = rng.random((m, n)) * 10
    return a, b, cost


def check_flow(flow, a, b):
    assert np.all(flow >= 0)
    np.testing.assert_allclose(flow.sum(axis=1), a, atol=1e-12)
    np.testing.assert_allclose(flow.sum(axis=0), b, atol=1e-12)


def test_vs_vertex_enumeration(rng):
    for _ in range(60):
        m, n = rng.integers(1, 4, size=2)
        a, b, cost = random_instance(rng, m, n)
        flow, val = solve_transport(a, b, cost)
        check_flow(flow, a, b)
        assert abs(val - enumerate_vertices(a, b, cost)) < 1e-10


def test_vs_linprog(rng):
    for _ in range(150):
        m = int(rng.integers(1, 9))
        n = int(rng.integers(1, 33))
        a, b, cost = random_instance(rng, m, n)
        flow, val = solve_transport(a, b, cost)
        check_flow(flow, a, b)
        assert abs(val - lp_oracle(a, b, cost)) < 1e-8


def test_degenerate_integer_instance():
    # equal marginals make many ties; the optimum is the diagonal
    a = np.full(4, 0.25)
    cost = np.ones((4, 4)) - np.eye(4)
    flow, val = solve_transport(a, a, cost)
    assert val == 0.0
    np.testing.assert_allclose(flow, np.eye(4) * 0.25)


def test_single_cell():
    flow, val = solve_transport([2.0], [2.0], [[3.0]])
    assert flow[0, 0] == 2.0 and val == 6.0


def test_unbalanced_raises():
    with pytest.raises(InfeasibleTransport):
        solve_transport([0.5, 0.5], [0.7, 0.4], np.ones((2, 2)))


def test_bad_shapes_raise():
    with pytest.raises(ValueError):
        solve_transport([1.0], [0.5, 0.5], np.ones((2, 2)))
    with pytest.raises(ValueError):
        solve_transport([-1.0, 2.0], [1.0], np.ones((2, 1)))


def test_emd_point_masses():
    assert emd([[0.0, 0.0]], [1.0], [[3.0, 4.0]]) == pytest.approx(5.0)


def test_emd_exact_match_is_zero(rng):
    pts = rng.normal(size=(5, 2))
    assert emd(pts, np.full(5, 0.2), pts) == pytest.approx(0.0, abs=1e-12)


def _dist(p, q):
    return emd(p[0], p[1], q[0], q[1])


def _random_dist(rng):
    k = int(rng.integers(1, 6))
    w = rng.random(k) + 0.1
    return rng.normal(size=(k, 2)) * 2, w / w.sum()


def test_metric_axioms(rng):
    for _ in range(100):
        x, y, z = (_random_dist(rng) for _ in range(3))
        dxy, dyx = _dist(x, y), _dist(y, x)
        assert dxy > 0
        assert abs(_dist(x, x)) < 1e-12
        assert abs(dxy - dyx) < 1e-10
        assert _dist(x, z) <= dxy + _dist(y, z) + 1e-10
