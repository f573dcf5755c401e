"""Lane-anchored multi-hypothesis predictor and its training objective.

The network is a flat MLP trunk with up to three linear heads sharing the
trunk features:

* ``nt``: ``M`` trajectories in anchor coordinates ``(n, l)``,
* ``xy``: ``M`` auxiliary Cartesian trajectories,
* ``score``: ``M`` ranking logits.

It stands in for the convolutional backbone of the full system; everything
downstream of the backbone (hypothesis heads, WTA-family reconstruction
losses, the two cross-coordinate regularizers and the ranking loss) is
implemented as described for the full model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import Polyline, nt_to_xy_batch, project_batch
from .losses import per_hypothesis_l2, per_hypothesis_l2_grad
from .nn import AdamState, Mlp, adam_step, log_softmax, mlp_backward, mlp_forward, softmax
from .objectives import Objective

HEADS = ("nt", "xy")
CHECKPOINT_FORMAT = "lanedac-model/1"


@dataclass
class AlanModel:
    trunk: Mlp
    heads: dict  # name -> single-layer Mlp; keys among "nt", "xy", "score"
    m: int
    horizon: int
    channels: int = 2
    out_scale: float = 1.0

    @classmethod
    def build(
        cls,
        input_dim: int,
        m: int,
        horizon: int,
        rng: np.random.Generator,
        heads=("nt", "xy"),
        hidden=(128, 128),
        score: bool = True,
        channels: int = 2,
        out_scale: float = 1.0,
        head_init: float = 0.1,
    ) -> "AlanModel":
        if not heads or any(h not in HEADS for h in heads):
            raise ValueError(f"heads must be a non-empty subset of {HEADS}")
        trunk = Mlp.init([input_dim, *hidden], rng)
        width = hidden[-1]
        hs = {}
        for h in heads:
            hs[h] = Mlp.init([width, m * horizon * channels], rng, out_scale=head_init)
        if score:
            hs["score"] = Mlp.init([width, m], rng, out_scale=head_init)
        return cls(trunk, hs, m, horizon, channels, out_scale)

    @property
    def input_dim(self) -> int:
        return self.trunk.layer_sizes[0]

    def params(self) -> list[np.ndarray]:
        out = self.trunk.params()
        for name in sorted(self.heads):
            out.extend(self.heads[name].params())
        return out

    def copy(self) -> "AlanModel":
        return AlanModel(self.trunk.copy(), {k: v.copy() for k, v in self.heads.items()},
                         self.m, self.horizon, self.channels, self.out_scale)


def model_forward(model: AlanModel, x):
    """Batch forward; returns ``(outputs, cache)``.

    ``outputs["nt"]``/``["xy"]`` are ``(B, M, H, C)``; ``["score"]`` is
    ``(B, M)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z, tcache = mlp_forward(model.trunk, x)
    feat = np.maximum(z, 0.0)
    out, hcache = {}, {}
    for name, head in model.heads.items():
        y, c = mlp_forward(head, feat)
        hcache[name] = c
        if name == "score":
            out[name] = y
        else:
            out[name] = model.out_scale * y.reshape(len(x), model.m, model.horizon, model.channels)
    return out, (tcache, z, hcache)


def model_backward(model: AlanModel, cache, grads: dict) -> list[np.ndarray]:
    """Parameter gradients in :meth:`AlanModel.params` order."""
    tcache, z, hcache = cache
    gfeat = np.zeros_like(z)
    head_grads = {}
    for name, head in model.heads.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros((len(z), head.layer_sizes[-1]))
        elif name != "score":
            g = model.out_scale * g.reshape(len(z), -1)
        pg, gin = mlp_backward(head, hcache[name], g)
        head_grads[name] = pg
        gfeat += gin
    tgrads, _ = mlp_backward(model.trunk, tcache, gfeat * (z > 0.0))
    out = list(tgrads)
    for name in sorted(model.heads):
        out.extend(head_grads[name])
    return out


# ---------------------------------------------------------------- objective


@dataclass(frozen=True)
class LossConfig:
    objective: Objective = field(default_factory=Objective)
    lambda1: float = 1.0
    lambda2: float = 1.0
    detach_target: bool = True


def _score_terms(logits, preds, gt, detach: bool):
    """Cross-entropy against ``softmax(-mean displacement)``; grads to logits and preds."""
    diff = preds - gt[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))  # (M, H)
    d = dist.mean(axis=-1)
    q = softmax(-d)
    logp = log_softmax(logits)
    loss = float(-np.sum(q * logp))
    g_logits = np.exp(logp) - q
    g_preds = None
    if not detach:
        gq = -logp
        gz = q * (gq - np.sum(q * gq))
        gd = -gz
        safe = np.where(dist > 0.0, dist, 1.0)
        g_preds = gd[:, None, None] * diff / safe[:, :, None] / dist.shape[-1]
        g_preds = np.where(dist[:, :, None] > 0.0, g_preds, 0.0)
    return loss, g_logits, g_preds, q


def alan_loss_and_grad(outputs: dict, gt_nt, gt_xy, anchor: Polyline | None, cfg: LossConfig, iteration: int = 0):
    """Loss for one agent plus gradients with respect to each output.

    ``outputs`` holds per-agent arrays (no batch axis). Returns
    ``(total, components, grads)``.
    """
    comps = {}
    grads = {}
    has_nt = "nt" in outputs
    has_xy = "xy" in outputs
    if has_nt:
        nt = outputs["nt"]
        l2 = per_hypothesis_l2(nt, gt_nt)
        w = cfg.objective.weights(l2, iteration)
        comps["nt_dac"] = float(np.dot(w, l2))
        grads["nt"] = w[:, None, None] * per_hypothesis_l2_grad(nt, gt_nt)
    if has_xy:
        xy = outputs["xy"]
        l2 = per_hypothesis_l2(xy, gt_xy)
        w = cfg.objective.weights(l2, iteration)
        comps["xy_dac"] = float(np.dot(w, l2))
        grads["xy"] = w[:, None, None] * per_hypothesis_l2_grad(xy, gt_xy)
    if has_nt and has_xy and anchor is not None and (cfg.lambda1 or cfg.lambda2):
        m, h, _ = nt.shape
        scale = 2.0 / (m * h)
        if cfg.lambda1:
            # anchor output vs auxiliary output taken into anchor coordinates
            proj, jac = project_batch(anchor, xy.reshape(-1, 2), clamp=False, with_jacobian=True)
            r = nt.reshape(-1, 2) - proj
            comps["reg_nt"] = float(np.sum(r * r)) / (m * h)
            grads["nt"] = grads["nt"] + cfg.lambda1 * scale * r.reshape(nt.shape)
            gxy = -np.einsum("ki,kij->kj", r, jac) * scale
            grads["xy"] = grads["xy"] + cfg.lambda1 * gxy.reshape(xy.shape)
        if cfg.lambda2:
            conv, jac = nt_to_xy_batch(anchor, nt.reshape(-1, 2), with_jacobian=True)
            r = xy.reshape(-1, 2) - conv
            comps["reg_xy"] = float(np.sum(r * r)) / (m * h)
            grads["xy"] = grads["xy"] + cfg.lambda2 * scale * r.reshape(xy.shape)
            gnt = -np.einsum("ki,kij->kj", r, jac) * scale
            grads["nt"] = grads["nt"] + cfg.lambda2 * gnt.reshape(nt.shape)
    if "score" in outputs:
        key, gt = ("nt", gt_nt) if has_nt else ("xy", gt_xy)
        loss, g_logits, g_preds, _ = _score_terms(outputs["score"], outputs[key], np.asarray(gt, float),
                                                  cfg.detach_target)
        comps["score"] = loss
        grads["score"] = g_logits
        if g_preds is not None:
            grads[key] = grads[key] + g_preds
    total = (
        comps.get("nt_dac", 0.0)
        + comps.get("xy_dac", 0.0)
        + cfg.lambda1 * comps.get("reg_nt", 0.0)
        + cfg.lambda2 * comps.get("reg_xy", 0.0)
        + comps.get("score", 0.0)
    )
    return total, comps, grads


def alan_loss(outputs, gt_nt, gt_xy, anchor, cfg: LossConfig, iteration: int = 0):
    total, comps, _ = alan_loss_and_grad(outputs, gt_nt, gt_xy, anchor, cfg, iteration)
    return total, comps


def batch_loss_and_grad(model: AlanModel, x, gt_nt, gt_xy, anchors, cfg: LossConfig, iteration: int):
    """Mean per-agent total over a batch, with parameter gradients."""
    out, cache = model_forward(model, x)
    for k, v in out.items():
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(f"non-finite {k} output at iteration {iteration}")
    b = len(x)
    totals = np.zeros(b)
    comps_sum: dict = {}
    gout = {k: np.zeros_like(v) for k, v in out.items()}
    for i in range(b):
        per = {k: v[i] for k, v in out.items()}
        t, comps, g = alan_loss_and_grad(
            per,
            None if gt_nt is None else gt_nt[i],
            None if gt_xy is None else gt_xy[i],
            None if anchors is None else anchors[i],
            cfg,
            iteration,
        )
        totals[i] = t
        for k, v in comps.items():
            comps_sum[k] = comps_sum.get(k, 0.0) + v / b
        for k, v in g.items():
            gout[k][i] = v / b
    grads = model_backward(model, cache, gout)
    return float(totals.mean()), comps_sum, grads


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 8
    lr: float = 1e-4
    lr_gamma: float = 0.95
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)


@dataclass
class ConditionalData:
    """Inputs with per-sample targets; ``gt_nt``/``anchors`` may be ``None``."""

    inputs: np.ndarray
    gt_xy: np.ndarray | None = None
    gt_nt: np.ndarray | None = None
    anchors: list | None = None

    def __len__(self):
        return len(self.inputs)

    def take(self, idx):
        return (
            self.inputs[idx],
            None if self.gt_nt is None else self.gt_nt[idx],
            None if self.gt_xy is None else self.gt_xy[idx],
            None if self.anchors is None else [self.anchors[i] for i in idx],
        )


@dataclass
class TrainResult:
    model: AlanModel
    curves: dict  # component -> list of per-iteration values


def train_conditional(model: AlanModel, data: ConditionalData, cfg: TrainConfig) -> TrainResult:
    """Adam on seeded shuffled mini-batches; lr decays after every epoch.

    Schedules (DAC depth, EWTA k) advance with the iteration count.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    state = AdamState(lr=cfg.lr, lr_gamma=cfg.lr_gamma)
    params = model.params()
    curves: dict = {"total": []}
    it = 0
    while it < cfg.iterations:
        order = rng.permutation(len(data))
        for start in range(0, len(order), cfg.batch_size):
            if it >= cfg.iterations:
                break
            idx = order[start:start + cfg.batch_size]
            x, gnt, gxy, anc = data.take(idx)
            total, comps, grads = batch_loss_and_grad(model, x, gnt, gxy, anc, cfg.loss, it)
            if not np.isfinite(total):
                raise FloatingPointError(f"non-finite loss at iteration {it}: {comps}")
            curves["total"].append(total)
            for k, v in comps.items():
                curves.setdefault(k, []).append(v)
            adam_step(state, params, grads)
            it += 1
        state.decay()
    return TrainResult(model, curves)


def predict(model: AlanModel, x) -> dict:
    out, _ = model_forward(model, x)
    return out


# ---------------------------------------------------------------- checkpoints


def mlp_to_dict(m: Mlp) -> dict:
    return {
        "layer_sizes": m.layer_sizes,
        "weights": [w.ravel().tolist() for w in m.weights],
        "biases": [b.tolist() for b in m.biases],
    }


def mlp_from_dict(d: dict) -> Mlp:
    sizes = [int(s) for s in d["layer_sizes"]]
    ws = [np.asarray(w, dtype=float).reshape(sizes[i], sizes[i + 1]) for i, w in enumerate(d["weights"])]
    bs = [np.asarray(b, dtype=float) for b in d["biases"]]
    return Mlp(sizes, ws, bs)


def model_to_dict(model: AlanModel) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "m": model.m,
        "horizon": model.horizon,
        "channels": model.channels,
        "out_scale": model.out_scale,
        "trunk": mlp_to_dict(model.trunk),
        "heads": {k: mlp_to_dict(v) for k, v in sorted(model.heads.items())},
    }


def model_from_dict(d: dict) -> AlanModel:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {d.get('format')!r}")
    return AlanModel(
        mlp_from_dict(d["trunk"]),
        {k: mlp_from_dict(v) for k, v in d["heads"].items()},
        int(d["m"]),
        int(d["horizon"]),
        int(d["channels"]),
        float(d["out_scale"]),
    )


def save_model(model: AlanModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> AlanModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
