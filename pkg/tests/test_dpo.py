import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distdpo.constants import finite_diff_gradient
from distdpo.dpo import (
    DpoConfig,
    batch_gradient,
    log_sigmoid,
    logit_gap,
    pair_gradient,
    pair_loss,
)
from distdpo.env import sample_trajectory, trajectory_log_prob, trajectory_score
from distdpo.gradcheck import random_case, relative_error, run_gradcheck
from distdpo.preference import PreferencePair
from distdpo.rng import stream


def _pair(inst, seed):
    rng = stream(seed, "pair")
    theta = 0.5 * rng.standard_normal(inst.spec.feature_dim)
    a = sample_trajectory(inst.spec, inst.feats, theta, rng)
    b = sample_trajectory(inst.spec, inst.feats, theta, rng)
    return PreferencePair(a, b)


def _raw_gap(inst, theta, pair):
    return trajectory_log_prob(inst.feats, theta, pair.plus) - trajectory_log_prob(inst.feats, theta, pair.minus)


def test_logit_gap_zero_when_theta_is_reference(small_instance):
    ref = np.linspace(-1, 1, 5)
    cfg = DpoConfig(ref_theta=ref)
    assert logit_gap(small_instance.spec, small_instance.feats, ref, cfg, _pair(small_instance, 0)) == pytest.approx(0, abs=1e-14)


def test_logit_gap_zero_for_identical_trajectories(small_instance):
    t = _pair(small_instance, 1).plus
    assert logit_gap(small_instance.spec, small_instance.feats, np.ones(5), DpoConfig(), PreferencePair(t, t)) == 0.0


def test_logit_gap_scales_with_beta(small_instance):
    pair = _pair(small_instance, 2)
    theta = np.arange(5.0) / 5
    raw = _raw_gap(small_instance, theta, pair) - _raw_gap(small_instance, np.zeros(5), pair)
    omega = logit_gap(small_instance.spec, small_instance.feats, theta, DpoConfig(beta=0.2), pair)
    assert omega == pytest.approx(0.2 * raw, rel=1e-12)


def test_loss_at_zero_logit(small_instance):
    t = _pair(small_instance, 3).plus
    assert pair_loss(small_instance.spec, small_instance.feats, np.ones(5), DpoConfig(), PreferencePair(t, t)) == pytest.approx(
        np.log(2), abs=1e-15
    )


def test_log_sigmoid_tails():
    assert -log_sigmoid(np.array([1e3]))[0] < 1e-6
    assert log_sigmoid(np.array([-1e3]))[0] == pytest.approx(-1e3)
    assert np.all(np.isfinite(log_sigmoid(np.array([-1e300, 1e300]))))


def test_loss_matches_naive_formula():
    omega = np.linspace(-20, 20, 401)
    np.testing.assert_allclose(-log_sigmoid(omega), -np.log(1 / (1 + np.exp(-omega))), rtol=0, atol=1e-12)


def test_loss_offset_is_additive(small_instance):
    pair = _pair(small_instance, 4)
    base = pair_loss(small_instance.spec, small_instance.feats, np.ones(5), DpoConfig(), pair)
    shifted = pair_loss(small_instance.spec, small_instance.feats, np.ones(5), DpoConfig(loss_offset=0.3), pair)
    assert shifted - base == pytest.approx(0.3, abs=1e-15)


def test_loss_monotone_decreasing_in_omega():
    omega = np.linspace(-50, 50, 1001)
    assert np.all(np.diff(-log_sigmoid(omega)) < 0)


def test_gradient_vanishes_for_identical_trajectories(small_instance):
    t = _pair(small_instance, 5).plus
    g = pair_gradient(small_instance.spec, small_instance.feats, np.ones(5), DpoConfig(), PreferencePair(t, t))
    assert np.all(g == 0)


def test_gradient_at_zero_logit(small_instance):
    # at theta = reference, omega = 0 and sigma(-omega) = 1/2
    spec, feats = small_instance.spec, small_instance.feats
    pair = _pair(small_instance, 6)
    cfg = DpoConfig(beta=0.2)
    nu = trajectory_score(spec, feats, np.zeros(5), pair.plus) - trajectory_score(spec, feats, np.zeros(5), pair.minus)
    np.testing.assert_allclose(pair_gradient(spec, feats, np.zeros(5), cfg, pair), -0.1 * nu, atol=1e-15)


def test_gradient_matches_finite_differences():
    for k in range(20):
        inst, theta, cfg, pair = random_case(stream(123, k))
        g = pair_gradient(inst.spec, inst.feats, theta, cfg, pair)
        fd = finite_diff_gradient(lambda t: pair_loss(inst.spec, inst.feats, t, cfg, pair), theta, 1e-5)
        assert relative_error(g, fd) < 1e-6


def test_gradcheck_suite_passes():
    res = run_gradcheck(20, seed=0)
    assert res.passed and len(res.cases) == 20
    assert all(c.feature_dim <= 8 and c.horizon <= 6 and c.num_states <= 5 and c.num_actions <= 5 for c in res.cases)


def test_descending_the_gradient_lowers_the_loss(small_instance):
    spec, feats = small_instance.spec, small_instance.feats
    pair = _pair(small_instance, 7)
    cfg = DpoConfig()
    theta = np.zeros(5)
    before = pair_loss(spec, feats, theta, cfg, pair)
    after = pair_loss(spec, feats, theta - 0.1 * pair_gradient(spec, feats, theta, cfg, pair), cfg, pair)
    assert after < before


def test_batch_gradient_cases(small_instance):
    spec, feats = small_instance.spec, small_instance.feats
    cfg = DpoConfig()
    theta = np.full(5, 0.3)
    pairs = [_pair(small_instance, 10 + j) for j in range(4)]
    p = pairs[0]
    np.testing.assert_allclose(batch_gradient(spec, feats, theta, cfg, [p]), pair_gradient(spec, feats, theta, cfg, p), atol=1e-16)
    np.testing.assert_allclose(batch_gradient(spec, feats, theta, cfg, [p, p]), pair_gradient(spec, feats, theta, cfg, p), atol=1e-16)
    total = sum(pair_gradient(spec, feats, theta, cfg, q) for q in pairs)
    np.testing.assert_allclose(batch_gradient(spec, feats, theta, cfg, pairs), total / 4, atol=1e-15)
    with pytest.raises(ValueError):
        batch_gradient(spec, feats, theta, cfg, [])


def test_reference_is_frozen(small_instance):
    # moving theta never touches the reference gap
    spec, feats = small_instance.spec, small_instance.feats
    ref = np.ones(5)
    cfg = DpoConfig(ref_theta=ref)
    pair_gradient(spec, feats, np.zeros(5), cfg, _pair(small_instance, 8))
    np.testing.assert_array_equal(cfg.ref_theta, ref)


def test_minibatch_gradient_is_unbiased(default_problem):
    problem = default_problem
    theta = 0.5 * np.ones(problem.dim)
    full = problem.client_gradient(0, theta)
    rng = stream(0, "unbiased")
    draws = np.array([problem.stochastic_gradient(0, theta, rng, 4) for _ in range(10_000)])
    dev = np.abs(draws.mean(axis=0) - full)
    assert np.all(dev <= 4 * draws.std(axis=0) / np.sqrt(10_000))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.0, 10.0))
def test_pointwise_gradient_bound(seed, scale):
    inst, theta, cfg, pair = random_case(np.random.default_rng(seed))
    theta = scale * theta
    spec, feats = inst.spec, inst.feats
    g = pair_gradient(spec, feats, theta, cfg, pair)
    nu_p = trajectory_score(spec, feats, theta, pair.plus)
    nu_m = trajectory_score(spec, feats, theta, pair.minus)
    assert np.linalg.norm(g) <= cfg.beta * (np.linalg.norm(nu_p) + np.linalg.norm(nu_m)) + 1e-12
    assert np.linalg.norm(g) <= 4 * cfg.beta * spec.horizon * feats.phi_bound + 1e-12


def test_dpo_config_validation():
    with pytest.raises(ValueError):
        DpoConfig(beta=0.0)
