"""Evaluation metrics for multi-hypothesis predictions.

All reported distances are unsquared Euclidean meters. Hypothesis sets are
``(M, T, 2)`` trajectories or ``(M, D)`` endpoints; ``scores`` are ranking
logits (higher is better).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .geometry import Polyline, distance_to, project_batch
from .nn import softmax
from .transport import emd

DEFAULT_HALFWIDTH = 2.0
DEFAULT_ANCHOR_THRESHOLD = 3.0
SIGMA_GRID = tuple(float(s) for s in np.logspace(-2, 1, 31))


def _endpoints(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    return h[:, -1, :] if h.ndim == 3 else h


def oracle_fde(hypotheses, gt) -> float:
    """Smallest final-point distance over all hypotheses."""
    gt = np.asarray(gt, dtype=float)
    end = gt[-1] if gt.ndim == 2 else gt
    return float(np.min(np.linalg.norm(_endpoints(hypotheses) - end, axis=-1)))


def top_by_score(scores, m_sel: int) -> np.ndarray:
    """Indices of the ``m_sel`` highest scores; ties keep the lower index first."""
    scores = np.asarray(scores, dtype=float)
    if not 1 <= m_sel <= len(scores):
        raise ValueError(f"m_sel must lie in [1, {len(scores)}]")
    return np.argsort(-scores, kind="stable")[:m_sel]


def made_mfde(trajs, scores, gt, m_sel: int) -> tuple[float, float]:
    """Best mean and final displacement among the ``m_sel`` top-scored hypotheses."""
    sel = np.asarray(trajs, dtype=float)[top_by_score(scores, m_sel)]
    disp = np.linalg.norm(sel - np.asarray(gt, dtype=float)[None], axis=-1)  # (m_sel, T)
    return float(disp.mean(axis=1).min()), float(disp[:, -1].min())


def is_miss(trajs, scores, gt, d: float, m_sel: int) -> bool:
    """Miss iff no selected hypothesis keeps its worst timestep within ``d``."""
    if d <= 0:
        raise ValueError("d must be > 0")
    sel = np.asarray(trajs, dtype=float)[top_by_score(scores, m_sel)]
    worst = np.linalg.norm(sel - np.asarray(gt, dtype=float)[None], axis=-1).max(axis=1)
    return not bool(np.any(worst < d))


def miss_rate(samples, d: float, m_sel: int) -> float:
    """``samples`` is an iterable of ``(trajs, scores, gt)``."""
    flags = [is_miss(t, s, g, d, m_sel) for t, s, g in samples]
    return float(np.mean(flags)) if flags else 0.0


def is_offroad(traj, lanes, halfwidth: float = DEFAULT_HALFWIDTH) -> bool:
    """Off-road iff some point is farther than ``halfwidth`` from every lane."""
    if halfwidth <= 0:
        raise ValueError("halfwidth must be > 0")
    pts = np.asarray(traj, dtype=float).reshape(-1, 2)
    nearest = np.min(np.stack([distance_to(lane, pts) for lane in lanes]), axis=0)
    return bool(np.any(nearest > halfwidth))


def offroad_rate(predictions, lanes_per_sample, halfwidth: float = DEFAULT_HALFWIDTH) -> float:
    """Fraction of all hypotheses, over all samples, that leave the corridor."""
    flags = []
    for trajs, lanes in zip(predictions, lanes_per_sample):
        flags.extend(is_offroad(t, lanes, halfwidth) for t in trajs)
    return float(np.mean(flags)) if flags else 0.0


def voronoi_occupancy(hypotheses, samples) -> np.ndarray:
    """Fraction of ``samples`` whose nearest hypothesis is each hypothesis."""
    h = np.asarray(hypotheses, dtype=float)
    s = np.asarray(samples, dtype=float)
    d = np.sum((s[:, None, :] - h[None, :, :]) ** 2, axis=-1)
    counts = np.bincount(np.argmin(d, axis=1), minlength=len(h))
    return counts / len(s)


def spurious_mode_count(hypotheses, samples, tau: float | None = None) -> int:
    """Hypotheses whose Voronoi cell holds less than ``tau`` (default ``0.1/M``) of the mass."""
    occ = voronoi_occupancy(hypotheses, samples)
    tau = 0.1 / len(occ) if tau is None else tau
    return int(np.sum(occ < tau))


# ---------------------------------------------------------------- mixtures


@dataclass(frozen=True)
class MixtureModel:
    means: np.ndarray
    weights: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be a distribution")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    def log_likelihood(self, points) -> np.ndarray:
        """Per-point log density of the isotropic Gaussian mixture."""
        return _mixture_logpdf(np.asarray(self.means, float), np.asarray(self.weights, float), self.sigma,
                               np.atleast_2d(np.asarray(points, float)))


def _mixture_logpdf(means, weights, sigma, pts):
    dim = means.shape[1]
    sq = np.sum((pts[:, None, :] - means[None]) ** 2, axis=-1)
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    a = logw[None] - 0.5 * sq / sigma**2
    amax = a.max(axis=1, keepdims=True)
    lse = amax[:, 0] + np.log(np.exp(a - amax).sum(axis=1))
    return lse - 0.5 * dim * np.log(2 * np.pi * sigma**2)


def mixture_weights(logits=None, counts=None) -> np.ndarray:
    """Softmax of assignment logits, or normalised win counts."""
    if (logits is None) == (counts is None):
        raise ValueError("give exactly one of logits or counts")
    if logits is not None:
        return softmax(np.asarray(logits, dtype=float))
    c = np.asarray(counts, dtype=float)
    return c / c.sum()


def fit_sigma(mixtures, heldout, grid=SIGMA_GRID) -> float:
    """Grid value maximising the summed held-out log-likelihood.

    ``mixtures`` is a list of ``(means, weights)`` and ``heldout`` a matching
    list of point arrays (one conditional distribution per scene).
    """
    best, best_ll = grid[0], -np.inf
    for s in grid:
        ll = sum(float(_mixture_logpdf(np.asarray(m, float), np.asarray(w, float), s,
                                       np.atleast_2d(np.asarray(p, float))).sum())
                 for (m, w), p in zip(mixtures, heldout))
        if ll > best_ll:
            best, best_ll = s, ll
    return float(best)


def fit_mixture(hypotheses, logits=None, counts=None, heldout=None, grid=SIGMA_GRID) -> MixtureModel:
    """Mixture over the hypotheses; sigma from held-out points when given."""
    means = _endpoints(hypotheses)
    w = mixture_weights(logits, counts)
    sigma = 1.0 if heldout is None else fit_sigma([(means, w)], [heldout], grid)
    return MixtureModel(means, w, sigma)


def mixture_emd(model: MixtureModel, samples) -> float:
    return emd(model.means, model.weights, samples)


# ---------------------------------------------------------------- anchors


def mean_abs_offset(anchor: Polyline, past) -> float:
    """Mean ``|n|`` of past positions against the anchor."""
    nt = project_batch(anchor, np.asarray(past, dtype=float).reshape(-1, 2))
    return float(np.mean(np.abs(nt[:, 0])))


def filter_bad_anchors(samples, threshold: float = DEFAULT_ANCHOR_THRESHOLD, anchor_of=None, past_of=None):
    """Drop samples whose past drifts more than ``threshold`` from the top anchor.

    Samples need ``anchor`` and ``past`` attributes unless accessors are given.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    anchor_of = anchor_of or (lambda s: s.anchor)
    past_of = past_of or (lambda s: s.past)
    return [s for s in samples if mean_abs_offset(anchor_of(s), past_of(s)) <= threshold]


# ---------------------------------------------------------------- reports


@dataclass
class MetricReport:
    """One row of results. Unset metrics stay ``None`` (empty in CSV)."""

    experiment: str
    variant: str
    seed: int
    n_samples: int = 0
    oracle_fde: float | None = None
    emd: float | None = None
    nll: float | None = None
    made: float | None = None
    mfde: float | None = None
    m_sel: int | None = None
    miss_rate: float | None = None
    miss_d: float | None = None
    offroad_rate: float | None = None
    spurious_count: float | None = None
    far_count: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("miss_rate", "offroad_rate"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, (np.floating, np.integer)):
                d[k] = v.item()
        return d


CSV_COLUMNS = tuple(f.name for f in fields(MetricReport) if f.name != "extra")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        d = r.to_dict()
        w.writerow([_cell(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def reports_to_json(reports, **meta) -> str:
    doc = dict(meta)
    doc["reports"] = [r.to_dict() for r in reports]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
