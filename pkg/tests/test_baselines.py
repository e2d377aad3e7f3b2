import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidair.baselines import (
    BaselineSpec,
    aps_positions,
    eig_beamformer,
    exhaustive_selection_oracle,
    greedy_selection,
    mrt_beamformer,
    random_fa_positions,
    select_all,
)
from fluidair.channel import (
    AntennaLayout,
    ChannelParams,
    array_response,
    channel_vector,
    effective_gain,
    max_gain_bound,
    min_distance_ok,
)
from fluidair.errors import DegenerateChannelError, InvalidArgumentError, PackingError
from fluidair.objective import SelectionVector, comm_penalty, penalty_terms

SIGMA, PA = 0.01, 1.0


def cvec(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_select_all():
    sel = select_all(3)
    np.testing.assert_array_equal(sel.e, [1, 1, 1])
    np.testing.assert_array_equal(select_all([5, 6]).s, [5, 6])


def test_spec_validation():
    with pytest.raises(InvalidArgumentError):
        BaselineSpec("dc")
    with pytest.raises(InvalidArgumentError):
        BaselineSpec("aps", {"grid_step": 0.0})


def test_mrt_single_and_duplicate():
    rng = np.random.default_rng(0)
    h = cvec(rng, 3)
    q = mrt_beamformer([h], [1])
    np.testing.assert_allclose(q, h / np.linalg.norm(h))
    assert effective_gain(q, h) == pytest.approx(np.linalg.norm(h) ** 2)
    np.testing.assert_allclose(mrt_beamformer([h, h], [1, 1]), q)
    with pytest.raises(DegenerateChannelError):
        mrt_beamformer([h, -h], [1, 1])


def test_eig_beamformer_unit_norm():
    rng = np.random.default_rng(1)
    hs = [cvec(rng, 4) for _ in range(3)]
    assert np.linalg.norm(eig_beamformer(hs, [1, 1, 1])) == pytest.approx(1.0)


def brute_best(q, hs, s):
    best = np.inf
    for k in range(1, len(hs) + 1):
        for combo in itertools.combinations(range(len(hs)), k):
            e = np.zeros(len(hs))
            e[list(combo)] = 1
            best = min(best, comm_penalty(SelectionVector(e, s), q, hs, SIGMA, PA))
    return best


@settings(max_examples=40)
@given(st.integers(1, 7), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_greedy_matches_brute_force(u, n, seed):
    rng = np.random.default_rng(seed)
    hs = [cvec(rng, n) * rng.uniform(0.01, 1) for _ in range(u)]
    s = rng.integers(1, 300, u).astype(float)
    q = cvec(rng, n)
    q /= np.linalg.norm(q)
    sel = greedy_selection(q, hs, s, SIGMA, PA)
    got = comm_penalty(sel, q, hs, SIGMA, PA)
    assert got == pytest.approx(brute_best(q, hs, s), rel=1e-12)


@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_random_fa_positions_feasible(n, seed):
    lay = random_fa_positions((0, 0.4, 0, 0.4), 0.05, 0.05, n, seed)
    assert lay.in_region() and min_distance_ok(lay)


def test_random_fa_packing_error():
    with pytest.raises(PackingError):
        random_fa_positions((0, 0.1, 0, 0.1), 0.1, 0.1, 3, 0)


def test_aps_single_element_approaches_bound():
    params = ChannelParams(0.7 - 0.2j, 0.4, -0.3)
    lay = AntennaLayout(np.array([0.13]), np.array([0.27]), (0, 0.4, 0, 0.4), 0.05, 0.05)
    q = np.array([1.0 + 0j])
    out = aps_positions(params, lay, 0.01, q, rounds=2)
    gain = effective_gain(q, channel_vector(params, out))
    assert gain >= 0.99 * max_gain_bound(params.beta, 1)


def test_aps_trace_monotone_and_coarse_grid_noop():
    rng = np.random.default_rng(2)
    params = ChannelParams(1.0 + 0j, 0.5, 0.9)
    lay = AntennaLayout(np.array([0.0, 0.2]), np.array([0.0, 0.2]), (0, 0.4, 0, 0.4), 0.05, 0.05)
    q = cvec(rng, 2)
    q /= np.linalg.norm(q)
    trace = []
    out = aps_positions(params, lay, 0.02, q, rounds=3, trace=trace)
    assert all(b >= a for a, b in zip(trace, trace[1:]))
    assert min_distance_ok(out)
    assert aps_positions(params, lay, 1.0, q) is lay


def test_aps_gain_bounded_by_aligned_value():
    params = ChannelParams(1.0 + 0j, 0.2, 0.1)
    lay = AntennaLayout(np.array([0.0, 0.2]), np.array([0.0, 0.2]), (0, 0.4, 0, 0.4), 0.05, 0.05)
    a = array_response(lay, 0.2, 0.1)
    out = aps_positions(params, lay, 0.05, a / np.sqrt(2))
    assert effective_gain(a / np.sqrt(2), channel_vector(params, out)) <= 2 + 1e-9


def test_oracle_examples():
    h = np.array([1.0 + 0j, 0.5j])
    res = exhaustive_selection_oracle([h], [10], "mrt_sum", SIGMA, PA)
    np.testing.assert_array_equal(res.selection.e, [1])
    res = exhaustive_selection_oracle([h, np.zeros(2, complex)], [10, 10], "eig", SIGMA, PA)
    np.testing.assert_array_equal(res.selection.e, [1, 0])
    with pytest.raises(InvalidArgumentError):
        exhaustive_selection_oracle([h] * 13, np.ones(13), "eig", SIGMA, PA)
    with pytest.raises(InvalidArgumentError):
        exhaustive_selection_oracle([h], [1], "nope", SIGMA, PA)


@settings(max_examples=25)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_oracle_no_worse_than_heuristics(u, seed):
    rng = np.random.default_rng(seed)
    hs = [cvec(rng, 2) * rng.uniform(0.01, 1) for _ in range(u)]
    s = rng.integers(1, 300, u).astype(float)
    res = exhaustive_selection_oracle(hs, s, "mrt_sum", SIGMA, PA)
    q_all = mrt_beamformer(hs, np.ones(u))
    r_all = comm_penalty(select_all(s), q_all, hs, SIGMA, PA)
    assert res.r <= r_all * (1 + 1e-12)
    gains = [effective_gain(res.q, h) for h in hs]
    assert res.r == pytest.approx(sum(penalty_terms(res.selection.e, s, gains, SIGMA, PA)))
