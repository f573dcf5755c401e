"""Central finite differences for checking hand-written gradients."""

from __future__ import annotations

import numpy as np


def numeric_grads(f, params, h: float = 1e-5) -> list[np.ndarray]:
    """``d f / d p`` for every entry of every array in ``params`` (perturbed in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = f()
            flat[i] = old - h
            fm = f()
            flat[i] = old
            gflat[i] = (fp - fm) / (2.0 * h)
        out.append(g)
    return out


def max_relative_error(analytic, numeric, floor: float = 1e-4) -> float:
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all entries.

    The floor keeps entries whose true gradient is ~0 from dividing
    finite-difference noise by nothing.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, float)
        n = np.asarray(n, float)
        den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n) / den)))
    return worst
