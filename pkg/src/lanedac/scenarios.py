"""Synthetic lane graphs with lane-following agents.

A scenario is a stem lane that forks into straight and curved branches
(optionally forking again), an on-ramp merging into the straight branch, and
agents that drive one branch chain at a sampled speed and acceleration with
smooth lateral noise. Agents on an "unmapped" lane parallel to the stem
stand in for the missing or disconnected centerlines of real maps.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import Polyline, concatenate, distance_to, nt_to_xy_batch, project_batch
from .lanegraph import LaneGraph, LaneSegment

UNMAPPED = "unmapped"


@dataclass(frozen=True)
class LaneScenarioConfig:
    n_agents: int = 20
    fork_levels: int = 1
    n_branches: int = 3
    branch_probs: tuple | None = None  # per first-level branch, default uniform
    stem_length: tuple = (40.0, 60.0)
    branch_length: tuple = (40.0, 60.0)
    continuation: float = 60.0
    curvature: tuple = (0.02, 0.05)
    merge: bool = True
    random_heading: bool = True
    dt: float = 0.5
    t_obs: int = 4
    horizon: int = 6
    speed: tuple = (6.0, 11.0)
    accel: tuple = (-1.0, 1.0)
    noise_sigma: float = 0.3
    noise_rho: float = 0.8
    halfwidth: float = 2.0
    unmapped_fraction: float = 0.0
    unmapped_offset: tuple = (6.0, 8.0)

    def __post_init__(self):
        if self.n_branches not in (2, 3):
            raise ValueError("n_branches must be 2 or 3")
        if self.fork_levels not in (1, 2):
            raise ValueError("fork_levels must be 1 or 2")
        if self.branch_probs is not None:
            if len(self.branch_probs) != self.n_branches or abs(sum(self.branch_probs) - 1) > 1e-9:
                raise ValueError("branch_probs must have one probability per branch, summing to 1")
        if not 0.0 <= self.unmapped_fraction <= 1.0:
            raise ValueError("unmapped_fraction must lie in [0, 1]")
        if self.noise_sigma < 0 or self.halfwidth <= 0:
            raise ValueError("noise_sigma must be >= 0 and halfwidth > 0")


@dataclass(frozen=True)
class LaneAgent:
    past: np.ndarray  # (t_obs, 2)
    future: np.ndarray  # (horizon, 2)
    branch: str  # first-level branch id, or UNMAPPED
    chain: tuple  # segment ids driven, empty for unmapped agents

    def trajectory(self) -> np.ndarray:
        return np.vstack([self.past, self.future])


@dataclass(frozen=True)
class LaneScenario:
    graph: LaneGraph
    agents: tuple
    dt: float
    halfwidth: float
    unmapped: Polyline | None = None

    def lanes(self) -> list[Polyline]:
        """Mapped centerlines, the drivable corridor for off-road checks."""
        return [s.centerline for s in self.graph]

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "dt": self.dt,
            "halfwidth": self.halfwidth,
            "unmapped": None if self.unmapped is None else self.unmapped.to_list(),
            "agents": [
                {"past": a.past.tolist(), "future": a.future.tolist(), "branch": a.branch, "chain": list(a.chain)}
                for a in self.agents
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _straight(start, heading, length, step=5.0):
    k = max(1, int(np.ceil(length / step)))
    s = np.linspace(0.0, length, k + 1)
    return start + s[:, None] * np.array([np.cos(heading), np.sin(heading)])


def _arc(start, heading, curvature, length, step=2.0):
    """Constant-curvature arc, positive curvature turning left."""
    if curvature == 0.0:
        return _straight(start, heading, length, step)
    k = max(2, int(np.ceil(length / step)))
    s = np.linspace(0.0, length, k + 1)
    r = 1.0 / curvature
    th = heading + s * curvature
    x = start[0] + r * (np.sin(th) - np.sin(heading))
    y = start[1] - r * (np.cos(th) - np.cos(heading))
    return np.stack([x, y], axis=-1)


def _end_heading(pts):
    d = pts[-1] - pts[-2]
    return float(np.arctan2(d[1], d[0]))


def build_fork_graph(rng: np.random.Generator, cfg: LaneScenarioConfig):
    """Returns ``(graph, chains)``; ``chains`` maps first-level branch id to
    the list of segment-id chains starting at the stem through it."""
    segs: dict = {}
    succ: dict = {}

    def add(sid, pts, parent=None):
        segs[sid] = Polyline(pts)
        succ.setdefault(sid, [])
        if parent is not None:
            succ[parent].append(sid)

    heading = rng.uniform(-np.pi, np.pi) if cfg.random_heading else 0.0
    origin = np.zeros(2)
    stem = _straight(origin, heading, rng.uniform(*cfg.stem_length))
    add("stem", stem)
    turns = [0.0, 1.0, -1.0][: cfg.n_branches]
    chains: dict = {}

    def grow(parent, pts, level, prefix):
        """Fork at the end of ``pts``; returns the chains below ``parent``."""
        out = []
        for k, sign in enumerate(turns if level == 1 else turns[:2]):
            sid = f"{prefix}{k}"
            kappa = sign * rng.uniform(*cfg.curvature)
            bp = _arc(pts[-1], _end_heading(pts), kappa, rng.uniform(*cfg.branch_length))
            add(sid, bp, parent)
            if level < cfg.fork_levels:
                subs = grow(sid, bp, level + 1, sid + ".")
            else:
                cid = sid + ".c"
                add(cid, _straight(bp[-1], _end_heading(bp), cfg.continuation), sid)
                subs = [[cid]]
            out.extend([[sid] + s for s in subs])
        return out

    for chain in grow("stem", stem, 1, "b"):
        chains.setdefault(chain[0], []).append(["stem"] + chain)

    if cfg.merge:
        # on-ramp joining the straight branch where it ends
        b0 = segs["b0"].points
        cont = next(s for s in succ["b0"])
        h = _end_heading(b0)
        side = np.array([-np.sin(h), np.cos(h)])
        if cfg.n_branches == 3:
            side = -side if rng.random() < 0.5 else side
        ramp_start = b0[-1] - 30.0 * np.array([np.cos(h), np.sin(h)]) + 10.0 * side
        add("ramp", _straight(ramp_start, float(np.arctan2(*(b0[-1] - ramp_start)[::-1])),
                              float(np.hypot(*(b0[-1] - ramp_start)))))
        succ["ramp"].append(cont)

    preds: dict = {sid: [] for sid in segs}
    for sid, ss in succ.items():
        for t in ss:
            preds[t].append(sid)
    graph = LaneGraph.from_segments(
        LaneSegment(sid, segs[sid], tuple(succ[sid]), tuple(preds[sid])) for sid in segs
    )
    return graph, chains


def _lateral_noise(rng, n, cfg: LaneScenarioConfig):
    if cfg.noise_sigma == 0.0:
        return np.zeros(n)
    out = np.empty(n)
    limit = 0.9 * cfg.halfwidth
    out[0] = rng.normal(0.0, cfg.noise_sigma)
    innov = cfg.noise_sigma * np.sqrt(1.0 - cfg.noise_rho**2)
    for t in range(1, n):
        out[t] = cfg.noise_rho * out[t - 1] + rng.normal(0.0, innov)
    return np.clip(out, -limit, limit)


def _drive(rng, poly: Polyline, cfg: LaneScenarioConfig, start_range):
    n = cfg.t_obs + cfg.horizon
    t = (np.arange(n) - (cfg.t_obs - 1)) * cfg.dt
    v = rng.uniform(*cfg.speed)
    a = rng.uniform(*cfg.accel)
    s_now = rng.uniform(*start_range)
    s = s_now + v * t + 0.5 * a * t * t
    # never drive backwards
    s = np.maximum.accumulate(s)
    nt = np.stack([_lateral_noise(rng, n, cfg), s], axis=-1)
    return nt_to_xy_batch(poly, nt)


def gen_lane_scenario(rng: np.random.Generator, config: LaneScenarioConfig = LaneScenarioConfig()) -> LaneScenario:
    cfg = config
    graph, chains = build_fork_graph(rng, cfg)
    branch_ids = sorted(chains)
    probs = np.full(len(branch_ids), 1.0 / len(branch_ids)) if cfg.branch_probs is None else np.array(cfg.branch_probs)
    stem_len = graph["stem"].centerline.length
    back = cfg.speed[1] * cfg.dt * cfg.t_obs
    # the agent is observed on the stem and crosses the fork during its future
    start_range = (back, stem_len - 1.0)
    unmapped = None
    if cfg.unmapped_fraction > 0:
        stem = graph["stem"].centerline
        off = rng.uniform(*cfg.unmapped_offset) * (1 if rng.random() < 0.5 else -1)
        h = stem.points[-1] - stem.points[0]
        h = h / np.hypot(*h)
        normal = np.array([-h[1], h[0]])
        length = stem_len + 150.0
        unmapped = Polyline(_straight(stem.points[0] + off * normal, float(np.arctan2(h[1], h[0])), length))
    agents = []
    for _ in range(cfg.n_agents):
        if unmapped is not None and rng.random() < cfg.unmapped_fraction:
            traj = _drive(rng, unmapped, cfg, start_range)
            agents.append(LaneAgent(traj[: cfg.t_obs], traj[cfg.t_obs:], UNMAPPED, ()))
            continue
        b = branch_ids[int(rng.choice(len(branch_ids), p=probs))]
        options = chains[b]
        chain = options[int(rng.integers(len(options)))]
        poly = concatenate([graph[s].centerline for s in chain])
        traj = _drive(rng, poly, cfg, start_range)
        if np.max(distance_to(poly, traj)) > cfg.halfwidth + 1e-9:
            raise AssertionError("agent left its corridor")
        agents.append(LaneAgent(traj[: cfg.t_obs], traj[cfg.t_obs:], b, tuple(chain)))
    return LaneScenario(graph, tuple(agents), cfg.dt, cfg.halfwidth, unmapped)


def chain_polyline(graph: LaneGraph, chain) -> Polyline:
    return concatenate([graph[s].centerline for s in chain])


def branch_divergence(scenario: LaneScenario, agent: LaneAgent) -> float:
    """Distance from the agent's final position to the nearest other branch chain."""
    if agent.branch == UNMAPPED:
        return 0.0
    end = agent.future[-1]
    others = [
        chain_polyline(scenario.graph, c)
        for c in _all_chains(scenario.graph)
        if c[1] != agent.branch
    ]
    if not others:
        return float("inf")
    return float(min(distance_to(p, end)[0] for p in others))


def _all_chains(graph: LaneGraph):
    out = []

    def walk(path):
        nxt = graph[path[-1]].successors
        if not nxt:
            out.append(tuple(path))
        for t in nxt:
            walk(path + [t])

    walk(["stem"])
    return out
