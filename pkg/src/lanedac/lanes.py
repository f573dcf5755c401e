"""From lane scenarios to model inputs, and model outputs back to metrics.

Every agent gets its own frame: origin at the last observed position, x axis
along the observed heading. Each anchor is cut to a window around the agent
and resampled to ``p`` equally spaced points; ``(n, l)`` coordinates are
measured along that window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alan import AlanModel, ConditionalData, model_forward
from .geometry import Polyline, nt_to_xy_batch, points_at, project_batch, transform_points
from .lanegraph import AnchorConfig, estimate_pose, retrieve_anchors
from .metrics import (
    DEFAULT_HALFWIDTH,
    MetricReport,
    is_miss,
    is_offroad,
    made_mfde,
    top_by_score,
)
from .scenarios import LaneScenario


@dataclass(frozen=True)
class EncodingConfig:
    p: int = 150
    window_behind: float = 10.0
    window_ahead: float = 70.0
    input_scale: float = 0.1
    max_anchors: int = 3
    anchor: AnchorConfig = field(default_factory=AnchorConfig)

    def input_dim(self, t_obs: int) -> int:
        return 5 * t_obs + 2 * self.p


@dataclass
class LaneSample:
    scene: int
    agent: int
    branch: str
    origin: np.ndarray
    yaw: float
    past: np.ndarray  # agent frame
    future: np.ndarray  # agent frame
    anchors: list  # windowed anchors, ranked from the past only
    anchor_ids: list
    oracle: Polyline
    oracle_ids: tuple
    lanes: list  # world-frame centerlines

    @property
    def anchor(self) -> Polyline:
        return self.anchors[0]

    def to_world(self, pts) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        pts = np.asarray(pts, dtype=float)
        return pts @ rot.T + self.origin


def window_anchor(poly: Polyline, cfg: EncodingConfig) -> Polyline:
    """Resampled piece of ``poly`` around the agent frame origin."""
    l0 = float(project_batch(poly, np.zeros(2))[0, 1])
    a = max(0.0, l0 - cfg.window_behind)
    b = min(poly.length, l0 + cfg.window_ahead)
    if b - a < 1.0:
        a, b = 0.0, poly.length
    return Polyline(points_at(poly, np.linspace(a, b, cfg.p)))


def encode(past, anchor: Polyline, cfg: EncodingConfig, mask=None) -> np.ndarray:
    """Rows ``(x, y, n, l, mask)`` per past step, then the anchor points."""
    past = np.asarray(past, dtype=float)
    mask = np.ones(len(past)) if mask is None else np.asarray(mask, dtype=float)
    nt = project_batch(anchor, np.nan_to_num(past), clamp=False)
    rows = np.concatenate([past, nt], axis=1) * cfg.input_scale * mask[:, None]
    rows = np.concatenate([rows, mask[:, None]], axis=1)
    return np.concatenate([rows.ravel(), anchor.points.ravel() * cfg.input_scale])


def build_samples(scenarios, cfg: EncodingConfig) -> list[LaneSample]:
    out = []
    for si, sc in enumerate(scenarios):
        lanes = sc.lanes()
        for ai, ag in enumerate(sc.agents):
            pose, _ = estimate_pose(ag.past)
            origin, yaw = pose.position, pose.yaw
            ranked = retrieve_anchors(sc.graph, ag.past, sc.dt, cfg.anchor)
            oracle = retrieve_anchors(sc.graph, ag.past, sc.dt, cfg.anchor, score_with=ag.trajectory())[0]
            loc = lambda poly: Polyline(transform_points(poly.points, origin, yaw))
            top = ranked[: cfg.max_anchors]
            out.append(
                LaneSample(
                    si,
                    ai,
                    ag.branch,
                    origin,
                    yaw,
                    transform_points(ag.past, origin, yaw),
                    transform_points(ag.future, origin, yaw),
                    [window_anchor(loc(c.polyline), cfg) for c in top],
                    [c.segment_ids for c in top],
                    window_anchor(loc(oracle.polyline), cfg),
                    oracle.segment_ids,
                    lanes,
                )
            )
    return out


def training_data(samples, cfg: EncodingConfig) -> ConditionalData:
    """Inputs and targets against each sample's oracle anchor."""
    x = np.stack([encode(s.past, s.oracle, cfg) for s in samples])
    gxy = np.stack([s.future for s in samples])
    gnt = np.stack([project_batch(s.oracle, s.future, clamp=False) for s in samples])
    return ConditionalData(x, gxy, gnt, [s.oracle for s in samples])


def primary_xy(model: AlanModel, outputs: dict, anchor: Polyline, i: int = 0) -> np.ndarray:
    """The model's trajectories in the agent frame: the anchor head mapped to
    xy when present, otherwise the Cartesian head."""
    if "nt" in outputs:
        nt = outputs["nt"][i]
        return nt_to_xy_batch(anchor, nt.reshape(-1, 2)).reshape(nt.shape)
    return outputs["xy"][i]


def predict_anchors(model: AlanModel, sample: LaneSample, cfg: EncodingConfig, anchors=None):
    """Per anchor ``(trajectories (M, H, 2) in world frame, logits (M,))``."""
    anchors = sample.anchors if anchors is None else anchors
    x = np.stack([encode(sample.past, a, cfg) for a in anchors])
    out, _ = model_forward(model, x)
    res = []
    for i, a in enumerate(anchors):
        trajs = sample.to_world(primary_xy(model, out, a, i))
        logits = out["score"][i] if "score" in out else np.zeros(model.m)
        res.append((trajs, logits))
    return res


STRATEGIES = ("top", "oracle", "bofa")


@dataclass(frozen=True)
class LaneEvalConfig:
    m_sel: int = 6
    miss_d: float = 2.0
    halfwidth: float = DEFAULT_HALFWIDTH


def evaluate_lanes(model: AlanModel, samples, enc: EncodingConfig, ev: LaneEvalConfig,
                   experiment="lanes", variant="", seed=0) -> dict:
    """One :class:`MetricReport` per anchor strategy.

    ``top`` pools the hypotheses of all ranked anchors and keeps the
    ``m_sel`` best by score; ``oracle`` uses the oracle anchor only; ``bofa``
    scores each ranked anchor separately and keeps the best one per sample.
    Off-road rates count the ``m_sel`` selected trajectories.
    """
    acc = {k: {"ade": [], "fde": [], "miss": [], "off": []} for k in STRATEGIES}
    for s in samples:
        gt = s.to_world(s.future)
        per_anchor = predict_anchors(model, s, enc)
        pools = {
            "top": [(np.concatenate([t for t, _ in per_anchor]), np.concatenate([g for _, g in per_anchor]))],
            "oracle": predict_anchors(model, s, enc, [s.oracle]),
            "bofa": per_anchor,
        }
        for key, options in pools.items():
            best = None
            for trajs, logits in options:
                k = min(ev.m_sel, len(trajs))
                ade, fde = made_mfde(trajs, logits, gt, k)
                if best is None or fde < best[1]:
                    best = (ade, fde, trajs, logits, k)
            ade, fde, trajs, logits, k = best
            a = acc[key]
            a["ade"].append(ade)
            a["fde"].append(fde)
            a["miss"].append(is_miss(trajs, logits, gt, ev.miss_d, k))
            sel = trajs[top_by_score(logits, k)]
            a["off"].extend(is_offroad(t, s.lanes, ev.halfwidth) for t in sel)
    reports = {}
    for key, a in acc.items():
        n = len(a["ade"])
        reports[key] = MetricReport(
            experiment,
            f"{variant}/{key}" if variant else key,
            seed,
            n_samples=n,
            made=float(np.mean(a["ade"])) if n else None,
            mfde=float(np.mean(a["fde"])) if n else None,
            m_sel=ev.m_sel,
            miss_rate=float(np.mean(a["miss"])) if n else None,
            miss_d=ev.miss_d,
            offroad_rate=float(np.mean(a["off"])) if a["off"] else None,
        )
    return reports
