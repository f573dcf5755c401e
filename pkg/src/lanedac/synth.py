"""Seeded synthetic data.

All generators take a ``numpy.random.Generator``; seeds are turned into
generators with :func:`make_rng`, which pins the bit generator to PCG64 so a
seed means the same stream on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class ModeSpec:
    mean: tuple
    sigma: float
    probability: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")


def check_modes(modes) -> None:
    if not modes:
        raise ValueError("need at least one mode")
    total = sum(m.probability for m in modes)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"mode probabilities sum to {total}, not 1")
    dims = {len(m.mean) for m in modes}
    if len(dims) != 1:
        raise ValueError("modes differ in dimension")


def sample_multimodal(modes, n: int, rng: np.random.Generator, return_labels: bool = False):
    """Pick a mode by probability, then add isotropic Gaussian noise."""
    check_modes(modes)
    probs = np.array([m.probability for m in modes])
    labels = rng.choice(len(modes), size=n, p=probs / probs.sum())
    means = np.array([m.mean for m in modes], dtype=float)
    sig = np.array([m.sigma for m in modes])
    pts = means[labels] + sig[labels, None] * rng.normal(size=(n, means.shape[1]))
    if return_labels:
        return pts, labels
    return pts


def square_modes(radius: float = 5.0, sigma: float = 0.5, probs=(0.25, 0.25, 0.25, 0.25)) -> list[ModeSpec]:
    """Four modes on the corners of a square centered at the origin."""
    corners = [(radius, radius), (-radius, radius), (-radius, -radius), (radius, -radius)]
    return [ModeSpec(c, sigma, p) for c, p in zip(corners, probs)]


def mode_sampler(modes):
    check_modes(modes)
    return lambda rng, n: sample_multimodal(modes, n, rng)


# ---------------------------------------------------------------- car / pedestrian


@dataclass(frozen=True)
class CpiConfig:
    """A car driving along +x towards a crosswalk at x = 0 that a pedestrian
    may cross. Joint outcomes, in order: (yield, cross), (yield, wait),
    (pass, cross), (pass, wait)."""

    t_obs: int = 3
    dt: float = 0.5
    horizon: float = 3.0
    car_start: tuple = (-22.0, -14.0)
    car_speed: tuple = (5.0, 8.0)
    ped_x: tuple = (-1.0, 1.0)
    ped_y: tuple = (-7.0, -5.0)
    ped_speed: tuple = (1.0, 1.6)
    stop_line: float = -5.0
    pass_accel: float = 2.0
    crossing: bool = True
    mode_probs: tuple = (0.35, 0.15, 0.15, 0.35)
    goal_sigma: float = 0.3

    def __post_init__(self):
        if len(self.mode_probs) != 4 or abs(sum(self.mode_probs) - 1.0) > 1e-9:
            raise ValueError("mode_probs must be 4 probabilities summing to 1")
        if self.t_obs < 2:
            raise ValueError("t_obs must be >= 2")


@dataclass(frozen=True)
class CpiScene:
    car_past: np.ndarray  # (t_obs, 2)
    ped_past: np.ndarray  # (t_obs, 2)
    goals: tuple  # ((car_goal, ped_goal, probability), ...)
    goal_sigma: float

    def __post_init__(self):
        total = sum(g[2] for g in self.goals)
        if abs(total - 1.0) > 1e-9:
            raise ValueError("goal probabilities must sum to 1")

    def inputs(self) -> np.ndarray:
        return np.concatenate([self.car_past.ravel(), self.ped_past.ravel()])

    def modes(self) -> list[ModeSpec]:
        return [ModeSpec(tuple(np.concatenate([c, p])), self.goal_sigma, pr) for c, p, pr in self.goals]

    def sample_targets(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` draws of the 4-vector (car goal, pedestrian goal)."""
        return sample_multimodal(self.modes(), n, rng)


def gen_cpi(rng: np.random.Generator, config: CpiConfig = CpiConfig()) -> CpiScene:
    c = config
    times = (np.arange(c.t_obs) - (c.t_obs - 1)) * c.dt
    x0 = rng.uniform(*c.car_start)
    v = rng.uniform(*c.car_speed)
    car_past = np.stack([x0 + v * times, np.zeros(c.t_obs)], axis=-1)
    px, py = rng.uniform(*c.ped_x), rng.uniform(*c.ped_y)
    pv = rng.uniform(*c.ped_speed)
    # the pedestrian idles at the curb while observed
    ped_past = np.tile([px, py], (c.t_obs, 1))
    yield_goal = np.array([min(x0 + v * c.horizon, c.stop_line), 0.0])
    pass_goal = np.array([x0 + v * c.horizon + 0.5 * c.pass_accel * c.horizon**2, 0.0])
    cross_goal = np.array([px, py + pv * c.horizon])
    wait_goal = np.array([px, py])
    if c.crossing:
        pr = c.mode_probs
        goals = (
            (yield_goal, cross_goal, pr[0]),
            (yield_goal, wait_goal, pr[1]),
            (pass_goal, cross_goal, pr[2]),
            (pass_goal, wait_goal, pr[3]),
        )
    else:
        goals = ((pass_goal, wait_goal, 1.0),)
    return CpiScene(car_past, ped_past, goals, c.goal_sigma)


def gen_cpi_dataset(rng: np.random.Generator, n: int, config: CpiConfig = CpiConfig()):
    """``n`` scenes with one sampled target each; returns ``(scenes, inputs, targets)``."""
    scenes = [gen_cpi(rng, config) for _ in range(n)]
    inputs = np.stack([s.inputs() for s in scenes])
    targets = np.stack([s.sample_targets(rng, 1)[0] for s in scenes])
    return scenes, inputs, targets
