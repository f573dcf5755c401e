"""Lane-segment graph and lane-anchor retrieval.

The retrieval pipeline for one agent is

1. :func:`closest_segments` around the agent pose,
2. :func:`retrieve_candidates` by walking successors/predecessors,
3. :func:`prune_subset_duplicates`,
4. :func:`heuristic_prune` on a constant-speed look-ahead point,
5. :func:`rank_anchors` by distance-along-lane, then centerline yaw.

:func:`retrieve_anchors` runs all of it; :func:`fallback_anchor` supplies the
nearest centerline when nothing connected is found.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .geometry import (
    Polyline,
    Pose,
    concatenate,
    distance_to,
    nt_to_xy,
    project_batch,
    wrap_angle,
    yaw_at,
)

SCORE_TIE = 1e-6


class LaneGraphError(ValueError):
    pass


class NoAnchorError(LookupError):
    """Raised when no candidate anchor exists for an agent."""


@dataclass(frozen=True)
class LaneSegment:
    id: str
    centerline: Polyline
    successors: tuple = ()
    predecessors: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "successors", tuple(self.successors))
        object.__setattr__(self, "predecessors", tuple(self.predecessors))


@dataclass(frozen=True)
class LaneGraph:
    segments: dict

    def __post_init__(self):
        errors = validate_links(self.segments.values(), self.segments)
        if errors:
            raise LaneGraphError(errors[0][1])

    def __getitem__(self, sid: str) -> LaneSegment:
        return self.segments[sid]

    def __iter__(self):
        return iter(self.segments.values())

    def __len__(self):
        return len(self.segments)

    @classmethod
    def from_segments(cls, segs: Iterable[LaneSegment]) -> "LaneGraph":
        segs = list(segs)
        ids = [s.id for s in segs]
        if len(set(ids)) != len(ids):
            raise LaneGraphError("duplicate segment id")
        return cls({s.id: s for s in segs})

    def to_dict(self) -> dict:
        return {
            "segments": [
                {
                    "id": s.id,
                    "centerline": s.centerline.to_list(),
                    "successors": list(s.successors),
                    "predecessors": list(s.predecessors),
                }
                for s in self.segments.values()
            ]
        }


def validate_links(segs, by_id) -> list:
    """``(segment id, message)`` for each link problem, in input order."""
    errors = []
    for s in segs:
        if s.id in s.successors or s.id in s.predecessors:
            errors.append((s.id, f"segment {s.id!r} links to itself"))
            continue
        for t in s.successors:
            if t not in by_id:
                errors.append((s.id, f"segment {s.id!r}: unknown successor {t!r}"))
            elif s.id not in by_id[t].predecessors:
                errors.append((s.id, f"segment {s.id!r}: successor {t!r} does not list it as predecessor"))
        for t in s.predecessors:
            if t not in by_id:
                errors.append((s.id, f"segment {s.id!r}: unknown predecessor {t!r}"))
            elif s.id not in by_id[t].successors:
                errors.append((s.id, f"segment {s.id!r}: predecessor {t!r} does not list it as successor"))
    return errors


def _line_of(text: str, sid: str) -> int:
    m = re.search(r'"id"\s*:\s*' + re.escape(json.dumps(sid)), text)
    return text.count("\n", 0, m.start()) + 1 if m else 0


def loads_graph(text: str) -> LaneGraph:
    """Parse the lane-graph JSON format, reporting the offending line on error."""
    data = json.loads(text)
    if not isinstance(data, dict) or "segments" not in data:
        raise LaneGraphError("line 1: expected an object with a 'segments' array")
    segs, seen = [], set()
    for raw in data["segments"]:
        sid = str(raw.get("id", ""))
        line = _line_of(text, sid)
        if not sid or sid in seen:
            raise LaneGraphError(f"line {line}: missing or duplicate segment id {sid!r}")
        seen.add(sid)
        try:
            poly = Polyline.from_list(raw["centerline"])
        except (KeyError, ValueError, TypeError) as exc:
            raise LaneGraphError(f"line {line}: segment {sid!r} has an invalid centerline ({exc})") from None
        segs.append(LaneSegment(sid, poly, raw.get("successors", []), raw.get("predecessors", [])))
    by_id = {s.id: s for s in segs}
    errors = validate_links(segs, by_id)
    if errors:
        sid, msg = errors[0]
        raise LaneGraphError(f"line {_line_of(text, sid)}: {msg}")
    return LaneGraph(by_id)


def load_graph(path) -> LaneGraph:
    with open(path) as fh:
        return loads_graph(fh.read())


def dumps_graph(graph: LaneGraph) -> str:
    return json.dumps(graph.to_dict(), indent=1)


@dataclass(frozen=True)
class AnchorCandidate:
    segment_ids: tuple
    polyline: Polyline = field(compare=False)
    dal_score: float = math.nan
    yaw_score: float = math.nan


@dataclass(frozen=True)
class AnchorConfig:
    radius: float = 10.0
    ahead: float = 80.0
    behind: float = 20.0
    tol: float = 2.0
    horizon: float = 6.0


def closest_segments(graph: LaneGraph, pose: Pose, radius: float) -> list[str]:
    if radius <= 0:
        raise ValueError("radius must be > 0")
    hits = []
    for s in graph:
        d = float(distance_to(s.centerline, pose.position)[0])
        if d <= radius:
            hits.append((d, s.id))
    hits.sort()
    return [sid for _, sid in hits]


def _forward_paths(graph, sid, budget, visited):
    """Successor chains after ``sid`` until ``budget`` metres are covered."""
    if budget <= 0:
        return [[]]
    seg = graph[sid]
    nexts = [t for t in seg.successors if t not in visited]
    if not nexts:
        return [[]]
    out = []
    for t in nexts:
        for tail in _forward_paths(graph, t, budget - graph[t].centerline.length, visited | {t}):
            out.append([t] + tail)
    return out


def _backward_paths(graph, sid, budget, visited):
    if budget <= 0:
        return [[]]
    prevs = [t for t in graph[sid].predecessors if t not in visited]
    if not prevs:
        return [[]]
    out = []
    for t in prevs:
        for head in _backward_paths(graph, t, budget - graph[t].centerline.length, visited | {t}):
            out.append(head + [t])
    return out


def candidate_from_ids(graph: LaneGraph, ids: Sequence[str]) -> AnchorCandidate:
    return AnchorCandidate(tuple(ids), concatenate([graph[i].centerline for i in ids]))


def retrieve_candidates(
    graph: LaneGraph,
    seeds: Sequence[str],
    ahead: float = 80.0,
    behind: float = 20.0,
    pose: Pose | None = None,
) -> list[AnchorCandidate]:
    """One candidate per (predecessor chain, successor chain) pair and seed.

    Distances are counted from the pose's projection onto each seed when a
    pose is given, otherwise from the seed's start. A chain stops once it
    covers its budget, at a dead end, or before repeating a segment.
    """
    if not seeds:
        raise ValueError("seeds must be non-empty")
    out = []
    for sid in seeds:
        seg = graph[sid]
        offset = 0.0
        if pose is not None:
            offset = float(project_batch(seg.centerline, pose.position)[0, 1])
        fwd = _forward_paths(graph, sid, ahead - (seg.centerline.length - offset), {sid})
        back = _backward_paths(graph, sid, behind - offset, {sid})
        for b in back:
            for f in fwd:
                ids = list(b) + [sid]
                for t in f:
                    if t in ids:
                        break
                    ids.append(t)
                out.append(candidate_from_ids(graph, ids))
    return out


def _contains(longer: tuple, shorter: tuple) -> bool:
    k = len(shorter)
    return any(longer[i:i + k] == shorter for i in range(len(longer) - k + 1))


def prune_subset_duplicates(cands: Sequence[AnchorCandidate]) -> list[AnchorCandidate]:
    """Drop candidates whose id sequence appears contiguously inside another's."""
    keep = []
    for i, c in enumerate(cands):
        dominated = False
        for j, o in enumerate(cands):
            if i == j or len(o.segment_ids) < len(c.segment_ids):
                continue
            if len(o.segment_ids) == len(c.segment_ids):
                # exact duplicates: first occurrence survives
                if o.segment_ids == c.segment_ids and j < i:
                    dominated = True
                    break
                continue
            if _contains(o.segment_ids, c.segment_ids):
                dominated = True
                break
        if not dominated:
            keep.append(c)
    return keep


def heuristic_prune(cands, pose: Pose, speed: float, horizon: float, tol: float) -> list[AnchorCandidate]:
    """Keep one candidate per look-ahead point (within ``tol`` metres)."""
    if speed < 0:
        raise ValueError("speed must be >= 0")
    kept, points = [], []
    for c in cands:
        l0 = float(project_batch(c.polyline, pose.position)[0, 1])
        p = nt_to_xy(c.polyline, (0.0, l0 + speed * horizon))
        if any(math.hypot(*(p - q)) <= tol for q in points):
            continue
        kept.append(c)
        points.append(p)
    return kept


def distance_along_lane_score(cand: AnchorCandidate, past) -> float:
    past = np.atleast_2d(np.asarray(past, dtype=float))
    if len(past) == 0:
        raise ValueError("past must be non-empty")
    return float(np.sum(np.abs(project_batch(cand.polyline, past)[:, 0])))


def centerline_yaw_score(cand: AnchorCandidate, pose: Pose) -> float:
    l = float(project_batch(cand.polyline, pose.position)[0, 1])
    return abs(wrap_angle(pose.yaw - yaw_at(cand.polyline, l)))


def rank_anchors(cands, past, pose: Pose) -> list[AnchorCandidate]:
    """Ascending distance-along-lane score; near ties by yaw score, then ids."""
    if not cands:
        raise NoAnchorError("no anchor available")
    scored = [
        replace(c, dal_score=distance_along_lane_score(c, past), yaw_score=centerline_yaw_score(c, pose))
        for c in cands
    ]
    scored.sort(key=lambda c: (c.dal_score, c.yaw_score, c.segment_ids))
    ranked, group = [], []
    for c in scored:
        if group and c.dal_score - group[0].dal_score > SCORE_TIE:
            ranked.extend(sorted(group, key=lambda g: (g.yaw_score, g.segment_ids)))
            group = []
        group.append(c)
    ranked.extend(sorted(group, key=lambda g: (g.yaw_score, g.segment_ids)))
    return ranked


def fallback_anchor(graph: LaneGraph, past, ahead: float = 80.0) -> AnchorCandidate:
    """Nearest centerline to the trajectory, extended along first successors."""
    past = np.atleast_2d(np.asarray(past, dtype=float))
    if len(graph) == 0:
        raise NoAnchorError("graph has no lanes")
    best = min(graph, key=lambda s: (float(np.mean(distance_to(s.centerline, past))), s.id))
    ids = [best.id]
    covered = best.centerline.length
    while covered < ahead:
        nxt = [t for t in graph[ids[-1]].successors if t not in ids]
        if not nxt:
            break
        ids.append(nxt[0])
        covered += graph[nxt[0]].centerline.length
    return candidate_from_ids(graph, ids)


def estimate_pose(past) -> tuple[Pose, float]:
    """Pose at the last observation and speed from the last displacement.

    Observations are assumed one time unit apart.
    """
    past = np.atleast_2d(np.asarray(past, dtype=float))
    if len(past) < 2:
        return Pose(past[-1], 0.0), 0.0
    d = past[-1] - past[-2]
    return Pose(past[-1], math.atan2(d[1], d[0])), float(math.hypot(*d))


def retrieve_anchors(graph: LaneGraph, past, dt: float, config: AnchorConfig = AnchorConfig(), score_with=None):
    """Ranked anchors for an agent observed at ``past`` (spacing ``dt`` seconds).

    ``score_with`` replaces the points used for ranking (the full trajectory
    gives the oracle anchor first). Falls back to the nearest centerline.
    """
    past = np.atleast_2d(np.asarray(past, dtype=float))
    pose, step = estimate_pose(past)
    speed = step / dt
    seeds = closest_segments(graph, pose, config.radius)
    cands = []
    if seeds:
        cands = retrieve_candidates(graph, seeds, config.ahead, config.behind, pose)
        cands = prune_subset_duplicates(cands)
        cands = heuristic_prune(cands, pose, speed, config.horizon, config.tol)
    if not cands:
        cands = [fallback_anchor(graph, past, config.ahead)]
    pts = past if score_with is None else score_with
    return rank_anchors(cands, pts, pose)
