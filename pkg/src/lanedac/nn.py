"""Small fully connected networks with hand-written reverse mode and Adam.

Parameters are kept as flat lists ``[W0, b0, W1, b1, ...]`` with weights
shaped ``(fan_in, fan_out)`` so a batch ``x @ W + b`` works row-wise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Mlp:
    """Affine layers with ReLU on hidden layers and identity output."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ValueError(f"layer {i}: expected {shape}, got {w.shape} / {b.shape}")

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator, out_scale: float = 1.0) -> "Mlp":
        """He-normal hidden layers; the last layer is additionally scaled by ``out_scale``."""
        ws, bs = [], []
        n = len(layer_sizes) - 1
        for i in range(n):
            fan_in, fan_out = layer_sizes[i], layer_sizes[i + 1]
            std = np.sqrt(2.0 / fan_in) if i < n - 1 else np.sqrt(1.0 / fan_in) * out_scale
            ws.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(list(layer_sizes), ws, bs)

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_sizes), [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def mlp_forward(model: Mlp, x):
    """Return ``(output, cache)``; ``x`` is ``(in,)`` or ``(B, in)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.layer_sizes[0]:
        raise ValueError(f"input has {x.shape[-1]} features, model expects {model.layer_sizes[0]}")
    cache = []
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        cache.append((h, z))
        h = np.maximum(z, 0.0) if i < last else z
    return h, cache


def mlp_backward(model: Mlp, cache, output_grad):
    """Gradients for ``params()`` order and for the input."""
    g = np.asarray(output_grad, dtype=float)
    grads = [None] * (2 * len(model.weights))
    last = len(model.weights) - 1
    for i in range(last, -1, -1):
        h, z = cache[i]
        if i < last:
            g = g * (z > 0.0)
        if g.ndim == 1:
            grads[2 * i] = np.outer(h, g)
            grads[2 * i + 1] = g.copy()
        else:
            grads[2 * i] = h.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
        g = g @ model.weights[i].T
    return grads, g


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_gamma: float = 0.95
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")

    def decay(self):
        """Exponential decay, called once per epoch."""
        self.lr *= self.lr_gamma


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """Bias-corrected Adam update, applied in place and returned."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = np.asarray(z, dtype=float)
    s = z - z.max(axis=axis, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=axis, keepdims=True))
