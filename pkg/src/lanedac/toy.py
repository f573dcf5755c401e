"""Fitting free hypothesis vectors to samples of a multimodal distribution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .nn import AdamState, adam_step
from .objectives import Objective

Sampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass
class FitResult:
    hypotheses: np.ndarray
    wins: np.ndarray
    final_wins: np.ndarray
    trajectory: np.ndarray  # snapshots, (n_snapshots, M, D)


def init_hypotheses(m: int, dim: int, rng: np.random.Generator, center=0.0, scale: float = 0.1) -> np.ndarray:
    return np.asarray(center, dtype=float) + scale * rng.normal(size=(m, dim))


def fit_unconditional(
    hypotheses: np.ndarray,
    sampler: Sampler,
    objective: Objective,
    steps: int,
    seed: int,
    lr: float = 0.01,
    batch_size: int = 1,
    final_window: int = 1000,
    snapshot_every: int = 0,
) -> FitResult:
    """Train ``M`` free vectors with a WTA-family objective.

    Each step draws ``batch_size`` samples, weights the squared distances with
    the objective and takes one Adam step. ``wins`` counts how often each
    hypothesis was the closest one; ``final_wins`` restricts that to the last
    ``final_window`` steps.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    rng = np.random.default_rng(seed)
    h = np.array(hypotheses, dtype=float)
    m = len(h)
    state = AdamState(lr=lr)
    wins = np.zeros(m, dtype=np.int64)
    final = np.zeros(m, dtype=np.int64)
    snaps = [h.copy()]
    for it in range(steps):
        y = sampler(rng, batch_size)
        diff = h[None, :, :] - y[:, None, :]  # (B, M, D)
        losses = np.sum(diff * diff, axis=-1)
        w = objective.weights_batch(losses, it)
        best = np.argmin(losses, axis=1)
        np.add.at(wins, best, 1)
        if it >= steps - final_window:
            np.add.at(final, best, 1)
        grad = 2.0 * np.einsum("bm,bmd->md", w, diff) / batch_size
        adam_step(state, [h], [grad])
        if snapshot_every and (it + 1) % snapshot_every == 0:
            snaps.append(h.copy())
    return FitResult(h, wins, final, np.stack(snaps))
