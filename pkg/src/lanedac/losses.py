"""Per-hypothesis regression losses and the IOC-style score loss."""

from __future__ import annotations

import numpy as np

from .nn import log_softmax, softmax


def per_hypothesis_l2(preds, target):
    """Mean squared Euclidean distance over timesteps, one value per hypothesis.

    ``preds`` is ``(..., M, T, C)`` and ``target`` ``(..., T, C)``; flat
    ``(M, D)`` predictions against a ``(D,)`` target count as one timestep.
    """
    preds = np.asarray(preds, dtype=float)
    target = np.asarray(target, dtype=float)
    if preds.ndim == target.ndim + 1 and preds.ndim == 2:
        preds = preds[:, None, :]
        target = target[None, :]
    if preds.shape[-2:] != target.shape[-2:]:
        raise ValueError(f"shape mismatch {preds.shape} vs {target.shape}")
    diff = preds - target[..., None, :, :]
    return np.mean(np.sum(diff * diff, axis=-1), axis=-1)


def per_hypothesis_l2_grad(preds, target):
    """``d values[m] / d preds[m]`` with the same shape as ``preds``."""
    preds = np.asarray(preds, dtype=float)
    target = np.asarray(target, dtype=float)
    flat = preds.ndim == target.ndim + 1 and preds.ndim == 2
    if flat:
        return 2.0 * (preds - target[None, :])
    t = preds.shape[-2]
    return 2.0 * (preds - target[..., None, :, :]) / t


def mean_displacement(preds, target):
    """Mean per-timestep Euclidean distance per hypothesis (unsquared)."""
    diff = np.asarray(preds, dtype=float) - np.asarray(target, dtype=float)[..., None, :, :]
    return np.mean(np.sqrt(np.sum(diff * diff, axis=-1)), axis=-1)


def ioc_target_from_distances(d):
    return softmax(-np.asarray(d, dtype=float))


def ioc_target_q(nt_preds, nt_gt):
    """Target ranking distribution ``softmax(-d)`` with ``d`` the mean displacement."""
    return ioc_target_from_distances(mean_displacement(nt_preds, nt_gt))


def score_loss(logits, q) -> float:
    """Cross-entropy of ``softmax(logits)`` against target distribution ``q``."""
    q = np.asarray(q, dtype=float)
    return float(-np.sum(q * log_softmax(logits), axis=-1).sum())


def score_loss_grad(logits, q):
    """Gradients with respect to ``logits`` and to ``q``."""
    logp = log_softmax(logits)
    return np.exp(logp) - np.asarray(q, dtype=float), -logp
