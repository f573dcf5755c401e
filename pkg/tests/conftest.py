import numpy as np
import pytest

from lanedac.geometry import Polyline


def dense_project(poly: Polyline, q, step=1e-4):
    """Brute-force projection: nearest of densely sampled centerline points."""
    pts, ls = [], []
    for k in range(poly.n_segments):
        a, b = poly.points[k], poly.points[k + 1]
        m = max(2, int(np.ceil(np.hypot(*(b - a)) / step)) + 1)
        t = np.linspace(0.0, 1.0, m)
        pts.append(a + t[:, None] * (b - a))
        ls.append(poly.cumlen[k] + t * (poly.cumlen[k + 1] - poly.cumlen[k]))
    pts = np.concatenate(pts)
    ls = np.concatenate(ls)
    d = np.hypot(*(pts - np.asarray(q)).T)
    i = int(np.argmin(d))
    return d[i], ls[i], pts[i]


def random_polyline(rng, n_seg=10, seg_len=(1.0, 4.0), max_turn=0.8):
    heading = rng.uniform(-np.pi, np.pi)
    pts = [rng.uniform(-5, 5, size=2)]
    for _ in range(n_seg):
        heading += rng.uniform(-max_turn, max_turn)
        length = rng.uniform(*seg_len)
        pts.append(pts[-1] + length * np.array([np.cos(heading), np.sin(heading)]))
    return Polyline(np.array(pts))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def lshape():
    return Polyline([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0]])


_ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    """Log one acceptance criterion outcome; shown again in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> None:
        _ACCEPTANCE[number] = (ok, detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
