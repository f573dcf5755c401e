"""Experiment runners shared by the CLI, the scripts and the acceptance tests.

* toy: free hypotheses fitted to a four-mode point distribution,
* cpi: two-stage conditional model on car/pedestrian scenes,
* lanes: anchor-coordinate ablation on generated fork scenarios.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alan import AlanModel, ConditionalData, LossConfig, TrainConfig, model_forward, train_conditional
from .lanes import EncodingConfig, LaneEvalConfig, build_samples, evaluate_lanes, training_data
from .metrics import (
    MetricReport,
    MixtureModel,
    filter_bad_anchors,
    fit_sigma,
    spurious_mode_count,
    voronoi_occupancy,
)
from .nn import AdamState, Mlp, adam_step, mlp_backward, mlp_forward, softmax
from .objectives import Objective
from .scenarios import LaneScenarioConfig, gen_lane_scenario
from .synth import CpiConfig, gen_cpi_dataset, mode_sampler, sample_multimodal, square_modes
from .toy import FitResult, fit_unconditional, init_hypotheses
from .transport import emd


def child_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent PCG64 streams derived from one seed."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


# ---------------------------------------------------------------- toy


@dataclass(frozen=True)
class ToyConfig:
    radius: float = 5.0
    sigma: float = 0.5
    probs: tuple = (0.25, 0.25, 0.25, 0.25)
    steps: int = 10000
    lr: float = 0.01
    batch_size: int = 1
    init_scale: float = 0.1
    n_eval: int = 4000
    n_emd: int = 500
    eval_seed: int = 999


@dataclass
class ToyRun:
    report: MetricReport
    fit: FitResult
    initial: np.ndarray
    eval_points: np.ndarray
    mode_means: np.ndarray


def far_count(hypotheses, mode_means, radius: float) -> int:
    """Hypotheses farther than ``radius`` from every mode mean."""
    d = np.linalg.norm(np.asarray(hypotheses)[:, None] - np.asarray(mode_means)[None], axis=-1)
    return int(np.sum(d.min(axis=1) > radius))


def evaluate_toy(hypotheses, variant: str, seed: int, cfg: ToyConfig = ToyConfig()):
    """Report for fitted hypotheses; returns ``(report, eval_points, mode_means)``."""
    modes = square_modes(cfg.radius, cfg.sigma, cfg.probs)
    ev_rng, w_rng = child_rngs(cfg.eval_seed, 2)
    pts = sample_multimodal(modes, cfg.n_eval, ev_rng)
    h = np.asarray(hypotheses, dtype=float)
    d = np.linalg.norm(pts[:, None] - h[None], axis=-1)
    weights = voronoi_occupancy(h, sample_multimodal(modes, cfg.n_eval, w_rng))
    means = np.array([md.mean for md in modes], dtype=float)
    report = MetricReport(
        "toy",
        variant,
        seed,
        n_samples=cfg.n_eval,
        oracle_fde=float(d.min(axis=1).mean()),
        emd=emd(h, weights, pts[: cfg.n_emd]),
        spurious_count=spurious_mode_count(h, pts),
        far_count=far_count(h, means, 3 * cfg.sigma),
    )
    return report, pts, means


def run_toy(objective: Objective, m: int, seed: int, cfg: ToyConfig = ToyConfig()) -> ToyRun:
    modes = square_modes(cfg.radius, cfg.sigma, cfg.probs)
    init = init_hypotheses(m, 2, child_rngs(seed, 1)[0], scale=cfg.init_scale)
    fit = fit_unconditional(init, mode_sampler(modes), objective, cfg.steps, seed,
                            lr=cfg.lr, batch_size=cfg.batch_size)
    report, pts, means = evaluate_toy(fit.hypotheses, objective.name, seed, cfg)
    return ToyRun(report, fit, init, pts, means)


# ---------------------------------------------------------------- car / pedestrian


@dataclass(frozen=True)
class CpiExperimentConfig:
    scene: CpiConfig = field(default_factory=CpiConfig)
    n_train: int = 4000
    n_val: int = 100
    n_test: int = 200
    n_gt: int = 100
    hidden: tuple = (64, 64)
    iterations: int = 10000
    stage2_iterations: int = 3000
    batch_size: int = 8
    lr: float = 1e-3
    lr_gamma: float = 0.95
    input_scale: float = 0.1
    out_scale: float = 10.0


@dataclass
class CpiRun:
    report: MetricReport
    model: AlanModel
    assign: Mlp
    sigma: float
    test_inputs: np.ndarray
    test_samples: list
    hypotheses: np.ndarray  # (n_test, M, 4)
    weights: np.ndarray  # (n_test, M)


def fit_assignment_head(model: AlanModel, inputs, targets, hidden, iterations, batch_size, lr, lr_gamma, seed) -> Mlp:
    """Second stage: predict which frozen hypothesis wins for a sample.

    Trained with cross-entropy against the nearest hypothesis, so the
    softmax output estimates each hypothesis' share of the conditional mass.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    hyps = model_forward(model, inputs)[0]["xy"][:, :, 0, :]
    winners = np.argmin(np.sum((hyps - targets[:, None, :]) ** 2, axis=-1), axis=1)
    head = Mlp.init([inputs.shape[1], *hidden, model.m], rng, out_scale=0.1)
    state = AdamState(lr=lr, lr_gamma=lr_gamma)
    params = head.params()
    onehot = np.eye(model.m)[winners]
    it = 0
    while it < iterations:
        order = rng.permutation(len(inputs))
        for s in range(0, len(order), batch_size):
            if it >= iterations:
                break
            idx = order[s:s + batch_size]
            logits, cache = mlp_forward(head, inputs[idx])
            grads, _ = mlp_backward(head, cache, (softmax(logits) - onehot[idx]) / len(idx))
            adam_step(state, params, grads)
            it += 1
        state.decay()
    return head


def _cpi_streams(seed: int):
    tr, va, te, init, gt_va, gt_te = child_rngs(seed, 6)
    return {"train": tr, "val": va, "test": te, "init": init, "gt_val": gt_va, "gt_test": gt_te}


def _cpi_predict(model: AlanModel, assign: Mlp, scenes, cfg: CpiExperimentConfig):
    x = np.stack([s.inputs() for s in scenes]) * cfg.input_scale
    h = model_forward(model, x)[0]["xy"][:, :, 0, :]
    w = softmax(mlp_forward(assign, x)[0])
    return x, h, w


def train_cpi(objective: Objective, m: int, seed: int, cfg: CpiExperimentConfig = CpiExperimentConfig()):
    """Both training stages plus the validation sigma fit; returns ``(model, assign, sigma)``."""
    rng = _cpi_streams(seed)
    _, x_tr, y_tr = gen_cpi_dataset(rng["train"], cfg.n_train, cfg.scene)
    x_tr = x_tr * cfg.input_scale
    model = AlanModel.build(x_tr.shape[1], m, 1, rng["init"], heads=("xy",), hidden=cfg.hidden, score=False,
                            channels=4, out_scale=cfg.out_scale)
    data = ConditionalData(x_tr, gt_xy=y_tr[:, None, :])
    tcfg = TrainConfig(cfg.iterations, cfg.batch_size, cfg.lr, cfg.lr_gamma, seed,
                       LossConfig(objective=objective, lambda1=0.0, lambda2=0.0))
    train_conditional(model, data, tcfg)
    assign = fit_assignment_head(model, x_tr, y_tr, cfg.hidden, cfg.stage2_iterations, cfg.batch_size,
                                 cfg.lr, cfg.lr_gamma, seed + 1)
    va_scenes = gen_cpi_dataset(rng["val"], cfg.n_val, cfg.scene)[0]
    _, h_va, w_va = _cpi_predict(model, assign, va_scenes, cfg)
    sigma = fit_sigma(list(zip(h_va, w_va)), [s.sample_targets(rng["gt_val"], cfg.n_gt) for s in va_scenes])
    return model, assign, sigma


def evaluate_cpi(model: AlanModel, assign: Mlp, sigma: float, variant: str, seed: int,
                 cfg: CpiExperimentConfig = CpiExperimentConfig()) -> CpiRun:
    """Oracle FDE, EMD and mixture NLL on the seed's test scenes."""
    rng = _cpi_streams(seed)
    te_scenes = gen_cpi_dataset(rng["test"], cfg.n_test, cfg.scene)[0]
    x_te, h_te, w_te = _cpi_predict(model, assign, te_scenes, cfg)
    samples = [s.sample_targets(rng["gt_test"], cfg.n_gt) for s in te_scenes]
    fde, emds, nll = [], [], []
    for h, w, y in zip(h_te, w_te, samples):
        fde.append(np.linalg.norm(y[:, None] - h[None], axis=-1).min(axis=1).mean())
        emds.append(emd(h, w, y))
        nll.append(-MixtureModel(h, w / w.sum(), sigma).log_likelihood(y).mean())
    report = MetricReport(
        "cpi",
        variant,
        seed,
        n_samples=cfg.n_test,
        oracle_fde=float(np.mean(fde)),
        emd=float(np.mean(emds)),
        nll=float(np.mean(nll)),
        extra={"sigma": sigma},
    )
    return CpiRun(report, model, assign, sigma, x_te, samples, h_te, w_te)


def run_cpi(objective: Objective, m: int, seed: int, cfg: CpiExperimentConfig = CpiExperimentConfig()) -> CpiRun:
    model, assign, sigma = train_cpi(objective, m, seed, cfg)
    return evaluate_cpi(model, assign, sigma, objective.name, seed, cfg)


# ---------------------------------------------------------------- lanes


LANE_VARIANTS = {
    "xy": ("xy",),
    "nt": ("nt",),
    "ntxy": ("nt", "xy"),
    "ntxy_reg": ("nt", "xy"),
}


@dataclass(frozen=True)
class LaneExperimentConfig:
    scenario: LaneScenarioConfig = field(default_factory=LaneScenarioConfig)
    encoding: EncodingConfig = field(default_factory=lambda: EncodingConfig(p=50))
    evaluation: LaneEvalConfig = field(default_factory=LaneEvalConfig)
    n_train_scenes: int = 40
    n_test_scenes: int = 10
    hidden: tuple = (128, 128)
    iterations: int = 6000
    batch_size: int = 8
    lr: float = 1e-4
    lr_gamma: float = 0.95
    out_scale: float = 10.0
    head_init: float = 0.01
    filter_threshold: float | None = None

    def __post_init__(self):
        if self.filter_threshold is not None and self.filter_threshold <= 0:
            raise ValueError("filter_threshold must be > 0")


@dataclass
class LaneData:
    train: list
    test: list
    n_test_total: int


def lane_data(seed: int, cfg: LaneExperimentConfig) -> LaneData:
    tr_rng, te_rng = child_rngs(seed, 2)
    train = build_samples([gen_lane_scenario(tr_rng, cfg.scenario) for _ in range(cfg.n_train_scenes)],
                          cfg.encoding)
    test = build_samples([gen_lane_scenario(te_rng, cfg.scenario) for _ in range(cfg.n_test_scenes)],
                         cfg.encoding)
    n = len(test)
    if cfg.filter_threshold is not None:
        train = filter_bad_anchors(train, cfg.filter_threshold)
        test = filter_bad_anchors(test, cfg.filter_threshold)
    return LaneData(train, test, n)


def train_lane_variant(variant: str, data: LaneData, objective: Objective, m: int, seed: int,
                       cfg: LaneExperimentConfig, lambda1: float = 1.0, lambda2: float = 1.0) -> AlanModel:
    heads = LANE_VARIANTS[variant]
    if variant != "ntxy_reg":
        lambda1 = lambda2 = 0.0
    cond = training_data(data.train, cfg.encoding)
    init_rng = child_rngs(seed, 3)[2]
    t_obs = data.train[0].past.shape[0]
    horizon = data.train[0].future.shape[0]
    model = AlanModel.build(cfg.encoding.input_dim(t_obs), m, horizon, init_rng, heads=heads,
                            hidden=cfg.hidden, out_scale=cfg.out_scale, head_init=cfg.head_init)
    tcfg = TrainConfig(cfg.iterations, cfg.batch_size, cfg.lr, cfg.lr_gamma, seed,
                       LossConfig(objective=objective, lambda1=lambda1, lambda2=lambda2))
    train_conditional(model, cond, tcfg)
    return model


def run_lanes(objective: Objective, m: int, seed: int, cfg: LaneExperimentConfig = LaneExperimentConfig(),
              variants=tuple(LANE_VARIANTS), lambda1: float = 1.0, lambda2: float = 1.0, data: LaneData | None = None):
    """Train and evaluate each variant on the same data; returns ``(reports, models)``."""
    data = lane_data(seed, cfg) if data is None else data
    reports, models = [], {}
    for v in variants:
        model = train_lane_variant(v, data, objective, m, seed, cfg, lambda1, lambda2)
        models[v] = model
        reps = evaluate_lanes(model, data.test, cfg.encoding, cfg.evaluation, "lanes", v, seed)
        for r in reps.values():
            r.extra["n_before_filter"] = data.n_test_total
        reports.extend(reps[k] for k in ("top", "oracle", "bofa"))
    return reports, models
