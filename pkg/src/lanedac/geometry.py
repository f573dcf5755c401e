"""Polylines and curvilinear (normal, longitudinal) lane coordinates.

A lane centerline is a :class:`Polyline`. Positions relative to it are
expressed as ``(n, l)`` where ``l`` is the arc length of the closest point
on the centerline and ``n`` the signed lateral offset, positive to the left
of the direction of travel.

Batch functions take and return ``(K, 2)`` arrays; the ``nt`` arrays are
ordered ``(n, l)`` per row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

MIN_SEGMENT = 1e-9
_TIE_TOL = 1e-12


class NTCoord(NamedTuple):
    n: float
    l: float


def wrap_angle(a):
    """Wrap an angle (or array of angles) into (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    yaw: float

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(2)
        if not np.all(np.isfinite(pos)) or not math.isfinite(self.yaw):
            raise ValueError("pose must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


@dataclass(frozen=True, eq=False)
class Polyline:
    """Ordered 2D points with cached segment data.

    Construct with ``Polyline(points)``; consecutive points closer than
    ``MIN_SEGMENT`` are rejected.
    """

    points: np.ndarray
    cumlen: np.ndarray = field(init=False, repr=False)
    _dirs: np.ndarray = field(init=False, repr=False)
    _lens: np.ndarray = field(init=False, repr=False)
    _unit: np.ndarray = field(init=False, repr=False)
    _normal: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs at least two (x, y) points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("polyline points must be finite")
        dirs = np.diff(pts, axis=0)
        lens = np.hypot(dirs[:, 0], dirs[:, 1])
        if np.any(lens <= MIN_SEGMENT):
            k = int(np.argmin(lens))
            raise ValueError(f"coincident polyline points at index {k}")
        unit = dirs / lens[:, None]
        pts.setflags(write=False)
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        cum.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "cumlen", cum)
        object.__setattr__(self, "_dirs", dirs)
        object.__setattr__(self, "_lens", lens)
        object.__setattr__(self, "_unit", unit)
        object.__setattr__(self, "_normal", np.stack([-unit[:, 1], unit[:, 0]], axis=1))

    @property
    def length(self) -> float:
        return float(self.cumlen[-1])

    @property
    def n_segments(self) -> int:
        return len(self._lens)

    def __len__(self):
        return len(self.points)

    def to_list(self) -> list:
        return self.points.tolist()

    @classmethod
    def from_list(cls, pairs: Sequence[Sequence[float]]) -> "Polyline":
        return cls(np.asarray(pairs, dtype=float))

    def _segment_of(self, l: np.ndarray) -> np.ndarray:
        # Interior vertices belong to the following segment.
        k = np.searchsorted(self.cumlen, l, side="right") - 1
        return np.clip(k, 0, self.n_segments - 1)


def polyline_to_json(poly: Polyline) -> str:
    return json.dumps(poly.to_list())


def polyline_from_json(text: str) -> Polyline:
    return Polyline.from_list(json.loads(text))


def concatenate(polys: Sequence[Polyline]) -> Polyline:
    """Join polylines end to start, dropping duplicated junction points."""
    chunks = [polys[0].points]
    for p in polys[1:]:
        pts = p.points
        if np.hypot(*(pts[0] - chunks[-1][-1])) <= MIN_SEGMENT:
            pts = pts[1:]
        chunks.append(pts)
    return Polyline(np.concatenate(chunks, axis=0))


def resample(polyline: Polyline, p: int) -> Polyline:
    """Return ``p`` points equally spaced in arc length along ``polyline``.

    The returned points lie exactly on the input at arc lengths
    ``linspace(0, length, p)``; endpoints are kept. Corners that fall
    between samples are cut, so the chord length of the result can be
    shorter than the input on curved lanes.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    if polyline.length < MIN_SEGMENT:
        raise ValueError("degenerate polyline")
    targets = np.linspace(0.0, polyline.length, p)
    return Polyline(points_at(polyline, targets))


def points_at(polyline: Polyline, l: np.ndarray) -> np.ndarray:
    """Centerline points at arc lengths ``l`` (clamped to the polyline)."""
    l = np.clip(np.asarray(l, dtype=float), 0.0, polyline.length)
    x = np.interp(l, polyline.cumlen, polyline.points[:, 0])
    y = np.interp(l, polyline.cumlen, polyline.points[:, 1])
    return np.stack([x, y], axis=-1)


def _closest(polyline: Polyline, q: np.ndarray):
    """Per query: chosen segment, raw (unclamped) segment parameter and distance."""
    p0 = polyline.points[:-1]
    rel = q[:, None, :] - p0[None, :, :]  # (K, S, 2)
    along = np.einsum("ksj,sj->ks", rel, polyline._unit)
    t_raw = along / polyline._lens[None, :]
    t = np.clip(t_raw, 0.0, 1.0)
    diff = rel - t[:, :, None] * polyline._dirs[None, :, :]
    d2 = np.einsum("ksj,ksj->ks", diff, diff)
    dmin = d2.min(axis=1, keepdims=True)
    # smallest segment index (hence smallest l) among near-ties
    k = np.argmax(d2 <= dmin + _TIE_TOL * np.maximum(1.0, dmin), axis=1)
    rows = np.arange(len(q))
    return k, t_raw[rows, k], t[rows, k], np.sqrt(d2[rows, k])


def project_batch(polyline: Polyline, q, clamp: bool = True, with_jacobian: bool = False):
    """Project Cartesian points onto the polyline.

    Returns ``nt`` of shape ``(K, 2)`` with columns ``(n, l)``. With
    ``clamp=False`` points beyond either end get ``l`` outside
    ``[0, length]`` measured along the extended terminal segment, which makes
    :func:`nt_to_xy_batch` an exact inverse there too.

    With ``with_jacobian`` also returns ``(K, 2, 2)`` derivatives
    ``d(n, l) / d(x, y)``.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    k, t_raw, t, dist = _closest(polyline, q)
    S = polyline.n_segments
    unit = polyline._unit[k]
    normal = polyline._normal[k]
    p0 = polyline.points[k]
    rel = q - p0
    along = np.einsum("kj,kj->k", rel, unit)
    lat = np.einsum("kj,kj->k", rel, normal)

    before = (k == 0) & (t_raw <= 0.0)
    after = (k == S - 1) & (t_raw >= 1.0)
    interior = (t > 0.0) & (t < 1.0)
    vertex = ~(interior | before | after)

    l = polyline.cumlen[k] + t * polyline._lens[k]
    n = lat.copy()
    jac = np.zeros((len(q), 2, 2))
    jac[:, 0, :] = normal
    jac[:, 1, :] = unit

    if not clamp:
        l = np.where(before | after, polyline.cumlen[k] + along, l)
    else:
        jac[before | after, 1, :] = 0.0

    if np.any(vertex):
        # Closest point is an interior vertex: n is the signed distance to it,
        # sign taken from the corner bisector so it agrees with both segments.
        idx = np.nonzero(vertex)[0]
        vi = k[idx] + (t[idx] >= 1.0).astype(int)
        v = polyline.points[vi]
        tan = polyline._unit[np.clip(vi - 1, 0, S - 1)] + polyline._unit[np.clip(vi, 0, S - 1)]
        d = q[idx] - v
        cross = tan[:, 0] * d[:, 1] - tan[:, 1] * d[:, 0]
        sign = np.where(cross < 0.0, -1.0, 1.0)
        r = dist[idx]
        n[idx] = sign * r
        l[idx] = polyline.cumlen[vi]
        safe = np.where(r > 0.0, r, 1.0)
        jac[idx, 0, :] = (sign / safe)[:, None] * d
        jac[idx, 1, :] = 0.0

    nt = np.stack([n, l], axis=1)
    if with_jacobian:
        return nt, jac
    return nt


def nt_to_xy_batch(polyline: Polyline, nt, with_jacobian: bool = False):
    """Inverse transform; arc lengths past either end extrapolate linearly.

    Jacobian (optional) is ``d(x, y) / d(n, l)`` with shape ``(K, 2, 2)``.
    """
    nt = np.atleast_2d(np.asarray(nt, dtype=float))
    n, l = nt[:, 0], nt[:, 1]
    k = polyline._segment_of(l)
    unit = polyline._unit[k]
    normal = polyline._normal[k]
    base = polyline.points[k] + (l - polyline.cumlen[k])[:, None] * unit
    xy = base + n[:, None] * normal
    if with_jacobian:
        jac = np.stack([normal, unit], axis=2)
        return xy, jac
    return xy


def project_xy_to_nt(polyline: Polyline, q) -> NTCoord:
    n, l = project_batch(polyline, np.asarray(q, dtype=float).reshape(1, 2))[0]
    return NTCoord(float(n), float(l))


def nt_to_xy(polyline: Polyline, c) -> np.ndarray:
    return nt_to_xy_batch(polyline, np.asarray(c, dtype=float).reshape(1, 2))[0]


def yaw_at(polyline: Polyline, l: float) -> float:
    k = int(polyline._segment_of(np.asarray([l], dtype=float))[0])
    u = polyline._unit[k]
    return float(math.atan2(u[1], u[0]))


def distance_to(polyline: Polyline, q) -> np.ndarray:
    """Unsigned point-to-polyline distances for ``(K, 2)`` queries."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    return _closest(polyline, q)[3]


def transform_points(points, origin, yaw: float) -> np.ndarray:
    """Express world points in a frame at ``origin`` rotated by ``yaw``."""
    c, s = math.cos(yaw), math.sin(yaw)
    d = np.asarray(points, dtype=float) - np.asarray(origin, dtype=float)
    return np.stack([c * d[..., 0] + s * d[..., 1], -s * d[..., 0] + c * d[..., 1]], axis=-1)
