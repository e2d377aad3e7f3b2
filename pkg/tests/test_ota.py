import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidair.errors import (
    DegenerateChannelError,
    EmptySelectionError,
    InvalidArgumentError,
    ZeroGradientError,
)
from fluidair.ota import (
    TransmitPlan,
    grad_normalizer,
    precode_symbols,
    receive_and_combine,
    receive_scaling_eta,
    theoretical_mse,
    transmit_plan,
)


def cvec(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


# -- normalizer and precoding

def test_grad_normalizer_examples():
    assert grad_normalizer([3.0, 4.0], 2) == pytest.approx(5 / math.sqrt(2))
    assert grad_normalizer(np.ones(7)) == pytest.approx(1.0)
    with pytest.raises(ZeroGradientError):
        grad_normalizer(np.zeros(3))


def test_grad_normalizer_length_mismatch():
    with pytest.raises(InvalidArgumentError):
        grad_normalizer([1.0, 2.0], 3)


def test_precode_examples():
    g = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(precode_symbols(g, 2.0, 2.0), g)
    f = precode_symbols([3.0, 4.0], 1.0, 5 / math.sqrt(2))
    assert np.linalg.norm(f) ** 2 / 2 == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        precode_symbols(g, 1.0, 0.0)


def test_power_boundary_accepted_and_excess_rejected():
    TransmitPlan(np.array([1.0 + 0j]), np.array([1.0]), 1.0)
    with pytest.raises(InvalidArgumentError):
        TransmitPlan(np.array([1.01 + 0j]), np.array([1.0]), 1.0)


# -- receive scaling

def test_eta_examples():
    assert receive_scaling_eta(np.array([1.0]), [np.array([2.0])]) == 0.5
    gains = [np.array([1.0]), np.array([4.0]), np.array([2.0])]
    assert receive_scaling_eta(np.array([1.0]), gains) == 0.25
    with pytest.raises(EmptySelectionError):
        receive_scaling_eta(np.array([1.0]), [])
    with pytest.raises(DegenerateChannelError):
        receive_scaling_eta(np.array([1.0]), [np.array([0.0])])


# -- closed-form MSE

def test_theoretical_mse_examples():
    assert theoretical_mse(1, 1.0, 1.0, 1.0, 1.0) == 1.0
    assert theoretical_mse(5, 0.01, 4.0, 1.0, 2.0) == pytest.approx(0.1)
    with pytest.raises(DegenerateChannelError):
        theoretical_mse(1, 1.0, 1.0, 1.0, 0.0)


@given(st.integers(1, 50), st.floats(1e-4, 10), st.floats(1e-3, 10), st.floats(1e-3, 10), st.floats(1e-3, 10))
def test_theoretical_mse_monotone(k, s2, g2, pa, gain):
    base = theoretical_mse(k, s2, g2, pa, gain)
    assert theoretical_mse(k, s2, g2, pa, gain * 1.5) < base
    assert theoretical_mse(k + 1, s2, g2, pa, gain) > base
    assert theoretical_mse(k, s2 * 1.5, g2, pa, gain) > base


# -- aggregation

def test_noiseless_single_user_recovery():
    rng = np.random.default_rng(1)
    h = cvec(rng, 4)
    g = rng.standard_normal(9)
    res = receive_and_combine([h], [1], h / np.linalg.norm(h), [g], 0.0, p_a=2.0)
    np.testing.assert_allclose(res.g_hat, g, atol=1e-9)
    assert abs(res.plan.a[0]) ** 2 == pytest.approx(2.0)


def test_noiseless_superposition():
    rng = np.random.default_rng(2)
    h = cvec(rng, 3)
    g1, g2 = rng.standard_normal(5), rng.standard_normal(5)
    res = receive_and_combine([h, h], [1, 1], h / np.linalg.norm(h), [g1, g2], 0.0)
    np.testing.assert_allclose(res.g_hat, g1 + g2, atol=1e-9)


def test_unselected_users_are_ignored():
    rng = np.random.default_rng(4)
    hs = [cvec(rng, 2) for _ in range(3)]
    gs = [rng.standard_normal(4) for _ in range(3)]
    q = hs[0] / np.linalg.norm(hs[0])
    res = receive_and_combine(hs, [1, 0, 1], q, gs, 0.0)
    np.testing.assert_allclose(res.g_hat, gs[0] + gs[2], atol=1e-9)


def test_error_is_target_minus_estimate():
    rng = np.random.default_rng(5)
    hs = [cvec(rng, 2) for _ in range(2)]
    gs = [rng.standard_normal(6) for _ in range(2)]
    q = (hs[0] + hs[1]) / np.linalg.norm(hs[0] + hs[1])
    res = receive_and_combine(hs, [1, 1], q, gs, 0.1, rng=3)
    np.testing.assert_array_equal(res.e2, res.target - res.g_hat_complex)
    assert res.noise_draws == 6


def test_zero_gradient_and_empty_selection_raise():
    h = np.array([1.0 + 0j])
    with pytest.raises(ZeroGradientError):
        receive_and_combine([h], [1], np.array([1.0]), [np.zeros(3)], 0.0)
    with pytest.raises(EmptySelectionError):
        receive_and_combine([h], [0], np.array([1.0]), [np.ones(3)], 0.0)


@settings(max_examples=40)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31 - 1), st.floats(0.01, 10))
def test_power_compliance_and_noiseless_exactness(k, n, seed, p_a):
    rng = np.random.default_rng(seed)
    hs = [cvec(rng, n) for _ in range(k)]
    gs = [rng.standard_normal(5) + 0.1 for _ in range(k)]
    q = cvec(rng, n)
    q /= np.linalg.norm(q)
    plan, _ = transmit_plan(q, hs, gs, p_a)
    assert np.all(np.abs(plan.a) ** 2 <= p_a + 1e-12)
    res = receive_and_combine(hs, np.ones(k), q, gs, 0.0, p_a=p_a)
    target = np.sum(gs, axis=0)
    np.testing.assert_allclose(res.g_hat, target, atol=1e-9 * max(1.0, np.abs(target).max()))


def test_empirical_mse_matches_theory():
    rng = np.random.default_rng(11)
    n, d, k, s2 = 2, 4, 3, 0.05
    hs = [cvec(rng, n) for _ in range(k)]
    gs = [v / np.linalg.norm(v) for v in (rng.standard_normal(d) for _ in range(k))]
    q = np.sum(hs, axis=0)
    q /= np.linalg.norm(q)
    gains = [abs(np.vdot(q, h)) ** 2 for h in hs]
    trials = 4000
    errs = np.array([np.sum(np.abs(receive_and_combine(hs, np.ones(k), q, gs, s2, rng=rng).e2) ** 2)
                     for _ in range(trials)])
    theory = theoretical_mse(k, s2, 1.0, 1.0, min(gains))
    se = errs.std(ddof=1) / math.sqrt(trials)
    assert abs(errs.mean() - theory) <= 3 * se
