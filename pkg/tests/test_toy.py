import numpy as np
import pytest

from lanedac.experiments import ToyConfig, child_rngs, far_count, run_toy
from lanedac.objectives import Objective
from lanedac.synth import ModeSpec, make_rng, mode_sampler
from lanedac.toy import fit_unconditional, init_hypotheses

POINT_MODE = [ModeSpec((2.0, -1.0), 0.0, 1.0)]


@pytest.mark.parametrize("variant", ["rwta", "ewta", "dac"])
def test_unimodal_collapse(variant):
    init = init_hypotheses(4, 2, make_rng(0))
    fit = fit_unconditional(init, mode_sampler(POINT_MODE), Objective(variant), 10_000, 0)
    assert np.linalg.norm(fit.hypotheses - [2.0, -1.0], axis=1).max() < 0.1


def test_unimodal_wta_moves_only_the_winner():
    # hypotheses that never win receive no gradient and stay where they started
    init = init_hypotheses(4, 2, make_rng(0))
    fit = fit_unconditional(init, mode_sampler(POINT_MODE), Objective("wta"), 10_000, 0)
    winner = int(np.argmax(fit.wins))
    assert fit.wins[winner] == 10_000
    assert np.linalg.norm(fit.hypotheses[winner] - [2.0, -1.0]) < 0.1
    others = np.delete(np.arange(4), winner)
    np.testing.assert_allclose(fit.hypotheses[others], init[others], atol=1e-12)


def test_zero_steps_returns_initial():
    init = init_hypotheses(5, 2, make_rng(1))
    fit = fit_unconditional(init, mode_sampler(POINT_MODE), Objective("dac"), 0, 0)
    np.testing.assert_array_equal(fit.hypotheses, init)
    assert fit.wins.sum() == 0


def test_deterministic_given_seed():
    init = init_hypotheses(4, 2, make_rng(2))
    a = fit_unconditional(init, mode_sampler(POINT_MODE), Objective("ewta"), 500, 7, batch_size=3)
    b = fit_unconditional(init, mode_sampler(POINT_MODE), Objective("ewta"), 500, 7, batch_size=3)
    np.testing.assert_array_equal(a.hypotheses, b.hypotheses)
    np.testing.assert_array_equal(a.wins, b.wins)


def test_negative_steps_rejected():
    with pytest.raises(ValueError):
        fit_unconditional(np.zeros((2, 2)), mode_sampler(POINT_MODE), Objective(), -1, 0)


def test_far_count():
    means = np.array([[0.0, 0.0], [10.0, 0.0]])
    h = np.array([[0.5, 0.0], [5.0, 0.0], [10.0, 2.0]])
    assert far_count(h, means, 1.5) == 2
    assert far_count(h, means, 5.0) == 0


def test_child_rngs_independent_and_reproducible():
    a = [g.normal(size=3) for g in child_rngs(5, 3)]
    b = [g.normal(size=3) for g in child_rngs(5, 3)]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    assert not np.allclose(a[0], a[1])


@pytest.fixture(scope="module")
def four_mode_runs():
    return {v: run_toy(Objective(v), 8, 0) for v in ("wta", "dac")}


def test_dac_covers_every_mode(four_mode_runs):
    run = four_mode_runs["dac"]
    sigma = ToyConfig().sigma
    d = np.linalg.norm(run.fit.hypotheses[:, None] - run.mode_means[None], axis=-1)
    assert np.all(d.min(axis=0) <= 3 * sigma)
    rate = run.fit.final_wins / run.fit.final_wins.sum()
    assert np.all(rate >= 0.001)


def test_wta_leaves_idle_hypotheses(four_mode_runs):
    assert np.sum(four_mode_runs["wta"].fit.final_wins == 0) >= 1


def test_toy_report_fields(four_mode_runs):
    rep = four_mode_runs["dac"].report
    assert rep.experiment == "toy" and rep.variant == "dac"
    assert rep.spurious_count == 0 and rep.far_count == 0
    assert rep.oracle_fde > 0.0 and rep.emd > 0.0
