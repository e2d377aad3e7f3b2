import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidair.channel import (
    AntennaLayout,
    ChannelConfig,
    ChannelParams,
    ChannelRealization,
    array_response,
    channel_vector,
    cost_hata_pl_db,
    db_to_linear,
    default_layout,
    effective_gain,
    max_gain_bound,
    min_distance_ok,
    sample_channels,
    sample_path_gain,
)
from fluidair.errors import InvalidArgumentError

REGION = (0.0, 1.0, 0.0, 1.0)


def layout(x, y, v=0.05, region=REGION):
    return AntennaLayout(np.asarray(x, float), np.asarray(y, float), region, v, v)


def unit(rng, n):
    q = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return q / np.linalg.norm(q)


# -- path loss

@pytest.mark.parametrize("d, expected", [(1000, 139.1), (100, 103.88), (10, 68.66)])
def test_cost_hata_values(d, expected):
    assert cost_hata_pl_db(d) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("d", [0.0, -5.0])
def test_cost_hata_rejects_nonpositive_distance(d):
    with pytest.raises(InvalidArgumentError):
        cost_hata_pl_db(d)


def test_path_gain_variance_matches_path_loss():
    rng = np.random.default_rng(3)
    n = 100_000
    draws = np.array(sample_path_gain(rng, np.full(n, 50.0), size=n))
    power = np.abs(draws) ** 2
    expected = 1.0 / db_to_linear(cost_hata_pl_db(50.0))
    se = power.std(ddof=1) / math.sqrt(n)
    assert abs(power.mean() - expected) <= 3 * se


# -- array response and channel vector

def test_array_response_single_element_at_origin():
    a = array_response(layout([0.0], [0.0]), 0.3, -1.1)
    np.testing.assert_allclose(a, [1 + 0j])


def test_array_response_half_wavelength_flips_sign():
    lay = AntennaLayout(np.array([0.0, 0.5]), np.zeros(2), (0, 1, 0, 1), 0.0, 0.0)
    np.testing.assert_allclose(array_response(lay, 0.0, 0.0, 1.0), [1, -1], atol=1e-12)


def test_array_response_zero_layout_is_all_ones():
    lay = AntennaLayout(np.zeros(4), np.zeros(4), REGION, 0.0, 0.0)
    np.testing.assert_allclose(array_response(lay, 1.0, 0.2), np.ones(4))


def test_array_response_rejects_non_finite():
    with pytest.raises(InvalidArgumentError):
        array_response(layout([0.0], [0.0]), math.nan, 0.0)


def test_channel_vector_examples():
    lay = AntennaLayout(np.zeros(3), np.zeros(3), REGION, 0.0, 0.0)
    np.testing.assert_allclose(channel_vector(ChannelParams(2j, 0.1, 0.2), lay), [2j, 2j, 2j])
    np.testing.assert_allclose(channel_vector(ChannelParams(0j, 0.1, 0.2), lay), np.zeros(3))
    np.testing.assert_allclose(channel_vector(ChannelParams(1.0, 0.1, 0.2), lay),
                               array_response(lay, 0.1, 0.2))


coords = st.lists(st.floats(0, 1), min_size=1, max_size=6)
angles = st.floats(-math.pi / 2, math.pi / 2)


@given(coords, angles, angles, st.floats(0.01, 1.0))
def test_array_response_unit_modulus(xs, theta, phi, wl):
    lay = layout(xs, xs[::-1])
    np.testing.assert_allclose(np.abs(array_response(lay, theta, phi, wl)), 1.0, atol=1e-12)


@given(coords, angles, angles, st.complex_numbers(max_magnitude=10), st.complex_numbers(max_magnitude=10))
def test_channel_vector_linear_in_beta(xs, theta, phi, beta, scale):
    lay = layout(xs, xs)
    h = channel_vector(ChannelParams(beta, theta, phi), lay)
    h2 = channel_vector(ChannelParams(scale * beta, theta, phi), lay)
    np.testing.assert_allclose(h2, scale * h, atol=1e-12 * max(1.0, abs(scale * beta)))


@given(coords, angles, angles, st.complex_numbers(min_magnitude=0.01, max_magnitude=10))
def test_channel_norm_is_bound(xs, theta, phi, beta):
    lay = layout(xs, xs)
    h = channel_vector(ChannelParams(beta, theta, phi), lay)
    assert np.linalg.norm(h) ** 2 == pytest.approx(max_gain_bound(beta, len(xs)), rel=1e-12)


# -- gain and its bound

def test_effective_gain_examples():
    rng = np.random.default_rng(0)
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    assert effective_gain(h / np.linalg.norm(h), h) == pytest.approx(np.linalg.norm(h) ** 2)
    assert effective_gain(np.array([1.0, 0.0]), np.array([0.0, 3.0])) == 0.0
    q = unit(rng, 4)
    naive = abs(sum(np.conj(q[i]) * h[i] for i in range(4))) ** 2
    assert effective_gain(q, h) == pytest.approx(naive, rel=1e-12)


def test_effective_gain_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        effective_gain(np.ones(2) / math.sqrt(2), np.ones(3))


def test_max_gain_bound_arithmetic():
    assert max_gain_bound(2.0, 4) == 16.0


@settings(max_examples=50)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_gain_never_exceeds_bound(n, seed):
    rng = np.random.default_rng(seed)
    beta = complex(rng.standard_normal(), rng.standard_normal())
    lay = layout(rng.uniform(0, 1, n), rng.uniform(0, 1, n))
    h = channel_vector(ChannelParams(beta, rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)), lay)
    bound = max_gain_bound(beta, n)
    gains = [effective_gain(unit(rng, n), h) for _ in range(1000)]
    assert max(gains) <= bound * (1 + 1e-12)


@given(coords, angles, angles, st.complex_numbers(min_magnitude=0.01, max_magnitude=10))
def test_phase_alignment_attains_bound(xs, theta, phi, beta):
    lay = layout(xs, xs)
    a = array_response(lay, theta, phi)
    h = channel_vector(ChannelParams(beta, theta, phi), lay)
    n = len(xs)
    assert effective_gain(a / math.sqrt(n), h) == pytest.approx(max_gain_bound(beta, n), rel=1e-9)


# -- layouts

def test_min_distance_examples():
    assert min_distance_ok(layout([0.3], [0.3], v=0.1))
    assert not min_distance_ok(layout([0.0, 0.05], [0.0, 0.5], v=0.1))
    assert min_distance_ok(layout([0.0, 0.1], [0.0, 0.1], v=0.1))


def test_default_layout_is_feasible():
    lay = default_layout(ChannelConfig())
    assert lay.feasible and lay.n == 4


# -- sampling

def test_sample_channels_deterministic():
    a = sample_channels(7, 5)
    b = sample_channels(7, 5)
    for x, y in zip(a, b):
        assert x.params == y.params
        np.testing.assert_array_equal(x.h, y.h)


def test_sample_channels_empty():
    assert sample_channels(0, 0) == []


def test_sample_channels_rayleigh_ignores_layout():
    ch = sample_channels(1, 2, ChannelConfig(mode="rayleigh"))[0]
    moved = ch.with_layout(ch.layout.moved(ch.layout.x + 0.01, ch.layout.y))
    np.testing.assert_array_equal(ch.h, moved.h)


def test_los_channel_recomputed_on_layout_change():
    ch = sample_channels(1, 1)[0]
    moved = ch.with_layout(ch.layout.moved(ch.layout.x + 0.013, ch.layout.y))
    np.testing.assert_allclose(moved.h, channel_vector(ch.params, moved.layout))
    assert isinstance(moved, ChannelRealization)
