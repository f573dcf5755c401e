"""Winner-takes-all loss family as per-hypothesis weight vectors.

Every variant maps a vector of per-hypothesis losses to non-negative weights;
the combined objective is ``sum(weights * losses)``. Selection only depends
on the ordering of the losses, so weights are treated as constants when
differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VARIANTS = ("wta", "rwta", "ewta", "dac")


def _as_losses(losses) -> np.ndarray:
    v = np.asarray(losses, dtype=float)
    if v.ndim != 1 or len(v) < 1:
        raise ValueError("losses must be a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("losses must be finite")
    return v


def max_depth(m: int) -> int:
    """Deepest DAC level for ``m`` hypotheses (singleton sets)."""
    return (m - 1).bit_length() + 1


def wta_weights(losses) -> np.ndarray:
    v = _as_losses(losses)
    w = np.zeros_like(v)
    w[int(np.argmin(v))] = 1.0
    return w


def rwta_weights(losses, eps: float = 0.05) -> np.ndarray:
    """Winner gets 1, every other hypothesis ``eps``."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    v = _as_losses(losses)
    w = np.full_like(v, eps)
    w[int(np.argmin(v))] = 1.0
    return w


def ewta_weights(losses, k: int) -> np.ndarray:
    """Weight ``1/k`` on each of the ``k`` best hypotheses."""
    v = _as_losses(losses)
    if not 1 <= k <= len(v):
        raise ValueError(f"k must lie in [1, {len(v)}]")
    w = np.zeros_like(v)
    w[np.argsort(v, kind="stable")[:k]] = 1.0 / k
    return w


def dac_partition(m: int, depth: int) -> list[range]:
    """Contiguous index sets at a DAC level, by recursive ceil/floor halving.

    Empty halves (possible when ``m`` is not a power of two) are dropped.
    """
    if not 1 <= depth <= max_depth(m):
        raise ValueError(f"depth must lie in [1, {max_depth(m)}] for M={m}")
    sets = [range(0, m)]
    for _ in range(depth - 1):
        nxt = []
        for s in sets:
            if len(s) <= 1:
                nxt.append(s)
                continue
            mid = s.start + (len(s) + 1) // 2
            nxt.extend([range(s.start, mid), range(mid, s.stop)])
        sets = nxt
    return sets


def dac_weights(losses, depth: int) -> np.ndarray:
    """Mean over the set holding the overall best hypothesis.

    At ``depth`` the hypotheses form ``2**(depth-1)`` contiguous sets. The set
    with the smallest member loss is the only one updated and every member
    gets weight ``1/|set|``.
    """
    v = _as_losses(losses)
    best = int(np.argmin(v))
    w = np.zeros_like(v)
    for s in dac_partition(len(v), depth):
        if best in s:
            w[s.start:s.stop] = 1.0 / len(s)
            break
    return w


def ewta_k_schedule(iteration: int, m: int, interval: int) -> int:
    if interval < 1:
        raise ValueError("interval must be >= 1")
    shift = iteration // interval
    return max(1, m >> shift) if shift < 64 else 1


def dac_depth_schedule(iteration: int, m: int, interval: int) -> int:
    if interval < 1:
        raise ValueError("interval must be >= 1")
    return min(1 + iteration // interval, max_depth(m))


@dataclass(frozen=True)
class Objective:
    """A WTA-family variant together with its schedule parameters."""

    name: str = "dac"
    eps: float = 0.05
    split_interval: int = 2000

    def __post_init__(self):
        if self.name not in VARIANTS:
            raise ValueError(f"unknown objective {self.name!r}; choose from {VARIANTS}")
        if self.split_interval < 1:
            raise ValueError("split_interval must be >= 1")

    def stage(self, iteration: int, m: int) -> int:
        """Schedule value at an iteration: DAC depth, EWTA k, else 0."""
        if self.name == "dac":
            return dac_depth_schedule(iteration, m, self.split_interval)
        if self.name == "ewta":
            return ewta_k_schedule(iteration, m, self.split_interval)
        return 0

    def weights(self, losses, iteration: int) -> np.ndarray:
        v = _as_losses(losses)
        if self.name == "wta":
            return wta_weights(v)
        if self.name == "rwta":
            return rwta_weights(v, self.eps)
        if self.name == "ewta":
            return ewta_weights(v, self.stage(iteration, len(v)))
        return dac_weights(v, self.stage(iteration, len(v)))

    def weights_batch(self, losses, iteration: int) -> np.ndarray:
        """Row-wise weights for a ``(B, M)`` loss matrix (same rules as :meth:`weights`)."""
        losses = np.asarray(losses, dtype=float)
        if losses.ndim != 2 or not np.all(np.isfinite(losses)):
            raise ValueError("losses must be a finite (B, M) matrix")
        b, m = losses.shape
        rows = np.arange(b)
        best = np.argmin(losses, axis=1)
        if self.name in ("wta", "rwta"):
            w = np.full((b, m), self.eps if self.name == "rwta" else 0.0)
            w[rows, best] = 1.0
            return w
        if self.name == "ewta":
            k = self.stage(iteration, m)
            w = np.zeros((b, m))
            top = np.argsort(losses, axis=1, kind="stable")[:, :k]
            w[rows[:, None], top] = 1.0 / k
            return w
        labels = np.empty(m, dtype=int)
        sizes = []
        for j, s in enumerate(dac_partition(m, self.stage(iteration, m))):
            labels[s.start:s.stop] = j
            sizes.append(len(s))
        chosen = labels[best]
        w = (labels[None, :] == chosen[:, None]) / np.asarray(sizes, dtype=float)[chosen][:, None]
        return w


def combined_loss(losses, weights) -> float:
    return float(np.dot(np.asarray(weights, dtype=float), np.asarray(losses, dtype=float)))
