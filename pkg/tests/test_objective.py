import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidair.errors import EmptySelectionError, InvalidArgumentError
from fluidair.objective import (
    BoundParams,
    SelectionVector,
    bound_after_T,
    comm_penalty,
    contraction_factor,
    noisy_gap_recursion,
    penalty_terms,
)


def unrolled(params, r, gap):
    for x in r:
        gap = contraction_factor(params, x) * gap + params.alpha1 / params.L * x
    return gap


def test_selection_vector_validation():
    with pytest.raises(InvalidArgumentError):
        SelectionVector([0.5, 1.0], [1, 1])
    with pytest.raises(InvalidArgumentError):
        SelectionVector([1.0], [1, 1])
    sel = SelectionVector([0.5, 1.0], [2, 3], binary=False)
    assert sel.mass == 4.0 and sel.count == 1


def test_comm_penalty_hand_example():
    sel = SelectionVector([1, 0], [1, 2])
    hs = [np.array([1.0 + 0j]), np.array([0.3 + 0j])]
    assert comm_penalty(sel, np.array([1.0]), hs, 1.0, 1.0) == pytest.approx(5.0)


def test_comm_penalty_all_selected_equal_gains():
    u, g, s2, pa = 4, 2.5, 0.3, 1.7
    hs = [np.array([np.sqrt(g) + 0j])] * u
    val = comm_penalty(SelectionVector(np.ones(u), np.ones(u)), np.array([1.0]), hs, s2, pa)
    assert val == pytest.approx(s2 / (pa * u**2 * g))


def test_comm_penalty_empty_selection():
    with pytest.raises(EmptySelectionError):
        comm_penalty(SelectionVector([0, 0], [1, 1]), np.array([1.0]), [np.ones(1)] * 2, 1.0, 1.0)


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31 - 1), st.floats(-np.pi, np.pi))
def test_comm_penalty_phase_invariant(u, n, seed, psi):
    rng = np.random.default_rng(seed)
    hs = [rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(u)]
    q = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    q /= np.linalg.norm(q)
    e = rng.integers(0, 2, u)
    e[0] = 1
    sel = SelectionVector(e, rng.integers(1, 300, u))
    a = comm_penalty(sel, q, hs, 0.01, 1.0)
    b = comm_penalty(sel, np.exp(1j * psi) * q, hs, 0.01, 1.0)
    assert b == pytest.approx(a, rel=1e-12)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=8), st.integers(0, 2**31 - 1))
def test_first_term_zero_iff_all_selected(e, seed):
    rng = np.random.default_rng(seed)
    e = np.array(e)
    e[0] = 1
    s = rng.integers(1, 100, e.size)
    data, _ = penalty_terms(e, s, np.ones(e.size), 0.01, 1.0)
    assert (data == 0) == bool(np.all(e == 1))


@given(st.integers(0, 2**31 - 1))
def test_noise_term_weakly_decreases_in_bottleneck_gain(seed):
    rng = np.random.default_rng(seed)
    u = 4
    s = rng.integers(1, 100, u).astype(float)
    g = rng.uniform(0.1, 2.0, u)
    e = np.ones(u)
    worst = int(np.argmax(s**2 / g))
    _, before = penalty_terms(e, s, g, 0.01, 1.0)
    g[worst] *= 1.5
    _, after = penalty_terms(e, s, g, 0.01, 1.0)
    assert after <= before


def test_contraction_examples():
    assert contraction_factor(BoundParams(mu=1, L=10), 0.0) == pytest.approx(0.9)
    assert contraction_factor(BoundParams(mu=3, L=3), 0.0) == 0.0
    assert contraction_factor(BoundParams(mu=1, L=2, alpha2=1), 0.25) == pytest.approx(0.75)
    with pytest.raises(InvalidArgumentError):
        contraction_factor(BoundParams(), -1.0)


@given(st.floats(0.01, 1.0), st.floats(1.0, 4.0), st.floats(0, 0.999))
def test_contraction_below_one(mu_ratio, alpha2, frac):
    p = BoundParams(mu=mu_ratio * 10, L=10, alpha2=alpha2)
    assert contraction_factor(p, frac / (2 * alpha2)) < 1


def test_r_factor_override():
    p = BoundParams(mu=1, L=2, alpha2=3, r_factor=1.0)
    assert contraction_factor(p, 0.5) == pytest.approx(1 - 0.5 * 0.5)


def test_bound_base_cases():
    p = BoundParams(mu=1, L=4, alpha1=2)
    assert bound_after_T(p, [0.1], 3.0) == pytest.approx(contraction_factor(p, 0.1) * 3.0 + 0.5 * 0.1)
    # mu = L and r = 0 makes every contraction vanish
    q = BoundParams(mu=4, L=4, alpha1=2)
    assert bound_after_T(q, [0.0, 0.0, 0.0], 5.0) == 0.0


@given(st.lists(st.floats(0, 0.4), min_size=1, max_size=8), st.floats(0, 10), st.integers(0, 2**31 - 1))
def test_bound_matches_recursion(r, gap, seed):
    rng = np.random.default_rng(seed)
    p = BoundParams(mu=rng.uniform(0, 5), L=5, alpha1=rng.uniform(0, 2), alpha2=rng.uniform(1, 2))
    assert bound_after_T(p, r, gap) == pytest.approx(unrolled(p, r, gap), rel=1e-12, abs=1e-300)


@given(st.lists(st.floats(0, 0.4), min_size=1, max_size=6), st.integers(0, 5), st.floats(0, 0.2))
def test_bound_monotone_in_r(r, idx, bump):
    p = BoundParams()
    bumped = list(r)
    bumped[idx % len(r)] += bump
    assert bound_after_T(p, bumped, 1.0) >= bound_after_T(p, r, 1.0) - 1e-15


def test_recursion_clean_contraction():
    p = BoundParams(mu=1, L=10)
    assert noisy_gap_recursion(p, [0.0] * 7, 0.0, 2.0) == pytest.approx(2.0 * 0.9**7)
