import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvbbo.categorical import (
    CategoricalState,
    MarginViolation,
    block_offsets,
    default_q_min,
    fisher_norm_sq,
    fisher_sqrt_times,
    natural_gradient,
    q_margin_correction,
    sigma_floor,
    step,
    update_q,
    update_trust_region,
)


def test_gradient_of_agreeing_samples():
    q = np.array([0.2, 0.3, 0.5])
    e = np.array([0.0, 1.0, 0.0])
    w = np.array([0.5, 0.3, 0.2])
    np.testing.assert_allclose(natural_gradient(q, np.tile(e, (3, 1)), w), e - q, atol=1e-15)


def test_gradient_vanishes_at_q():
    q = np.array([0.2, 0.8])
    np.testing.assert_array_equal(natural_gradient(q, q[None, :], np.array([1.0])), [0.0, 0.0])


def test_gradient_against_direct_summation():
    rng = np.random.default_rng(0)
    counts = (3, 4, 2)
    offsets = block_offsets(counts)
    q = np.concatenate([rng.dirichlet(np.ones(k)) for k in counts])
    rows = np.zeros((5, offsets[-1]))
    for i in range(5):
        for n, k in enumerate(counts):
            rows[i, offsets[n] + rng.integers(k)] = 1.0
    w = np.array([0.4, 0.25, 0.15, 0.12, 0.08])
    expected = np.zeros_like(q)
    for i in range(5):
        for j in range(len(q)):
            expected[j] += w[i] * (rows[i, j] - q[j])
    got = natural_gradient(q, rows, w)
    np.testing.assert_allclose(got, expected, atol=1e-15)
    for n in range(3):
        assert abs(got[offsets[n] : offsets[n + 1]].sum()) < 1e-15


def test_fisher_norm_examples():
    q = np.array([0.5, 0.5])
    assert fisher_norm_sq(q, np.zeros(2)) == 0.0
    assert math.isclose(fisher_norm_sq(q, np.array([0.1, -0.1])), 0.04, rel_tol=1e-14)
    G = np.array([0.3, -0.1, -0.2])
    q3 = np.array([0.5, 0.3, 0.2])
    v = fisher_sqrt_times(q3, G)
    assert math.isclose(float(v @ v), fisher_norm_sq(q3, G), rel_tol=1e-14)


def test_fisher_rejects_non_positive_q():
    with pytest.raises(MarginViolation):
        fisher_norm_sq(np.array([1.0, 0.0]), np.array([0.1, -0.1]))


def test_update_q_skip_and_unit_radius():
    state = CategoricalState.initial((3,), [0.05])
    np.testing.assert_array_equal(update_q(state, np.zeros(3)), state.q)
    G = np.array([0.3, -0.1, -0.2])
    state.delta = math.sqrt(fisher_norm_sq(state.q, G))
    np.testing.assert_allclose(update_q(state, G), state.q + G, atol=1e-15)


def test_trust_region_full_replacement_when_beta_is_one():
    state = CategoricalState.initial((2,), [0.1])
    state.delta = 1.0  # one free parameter, so beta = 1
    assert state.beta == 1.0
    state.s = np.array([5.0, -5.0])
    state.gamma = 7.0
    G = np.array([0.2, -0.2])
    s, gamma, _ = update_trust_region(state, G)
    np.testing.assert_allclose(s, fisher_sqrt_times(state.q, G), atol=1e-15)
    assert math.isclose(gamma, fisher_norm_sq(state.q, G), rel_tol=1e-14)


def test_trust_region_against_formula():
    rng = np.random.default_rng(1)
    state = CategoricalState.initial((3, 4), [0.05, 0.03])
    state.s = rng.standard_normal(7)
    state.gamma = 0.7
    state.delta = 0.9
    G = rng.standard_normal(7) * 0.1
    beta = 0.9 / 5
    f = G / np.sqrt(state.q)
    s = (1 - beta) * state.s + math.sqrt(beta * (2 - beta)) * f
    gamma = (1 - beta) ** 2 * 0.7 + beta * (2 - beta) * float(f @ f)
    delta = 0.9 * math.exp(beta * (float(s @ s) / 1.5 - gamma))
    got = update_trust_region(state, G)
    np.testing.assert_allclose(got[0], s, rtol=1e-14)
    assert math.isclose(got[1], gamma, rel_tol=1e-14)
    assert math.isclose(got[2], delta, rel_tol=1e-14)


def test_zero_gradient_decays_accumulator():
    state = CategoricalState.initial((3,), [0.05])
    state.s = np.array([1.0, -0.5, -0.5])
    state.gamma = 2.0
    norms = []
    for _ in range(50):
        state.s, state.gamma, state.delta = update_trust_region(state, np.zeros(3))
        norms.append(np.linalg.norm(state.s))
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-3 * norms[0]
    assert state.delta > 0


def _signal_run(rng, persistent):
    state = CategoricalState.initial((5,), [0.01])
    direction = np.array([0.4, -0.1, -0.1, -0.1, -0.1])
    deltas = []
    for _ in range(1000):
        if persistent:
            G = direction * 0.05
        else:
            G = rng.standard_normal(5) * 0.05
            G -= G.mean()
        state.s, state.gamma, state.delta = update_trust_region(state, G)
        deltas.append(state.delta)
    return deltas


def test_delta_reacts_to_signal_to_noise():
    rng = np.random.default_rng(2)
    noisy = _signal_run(rng, persistent=False)
    steady = _signal_run(rng, persistent=True)
    assert np.median(noisy) < 1.0
    assert np.median(steady) > 1.0


def test_beta_capped_at_one():
    state = CategoricalState.initial((2,), [0.1])
    state.delta = 10.0
    assert state.beta == 1.0
    s, gamma, delta = update_trust_region(state, np.array([0.1, -0.1]))
    assert np.all(np.isfinite(s)) and math.isfinite(delta)


@pytest.mark.parametrize(
    "sigma,min_eig,expected",
    [(1e-20, 1.0, 1e-15), (0.3, 1.0, 0.3), (0.0, 1.0, 1e-15)],
)
def test_sigma_floor(sigma, min_eig, expected):
    assert math.isclose(sigma_floor(sigma, min_eig, 1e-30), expected, rel_tol=1e-14)


@pytest.mark.parametrize(
    "q,q_min,expected",
    [
        ([0.95, 0.03, 0.02], 0.1, [0.8, 0.1, 0.1]),
        ([0.2, 0.3, 0.5], 0.1, [0.2, 0.3, 0.5]),
        ([1.0, 0.0], 0.2, [0.8, 0.2]),
    ],
)
def test_q_margin_examples(q, q_min, expected):
    got = q_margin_correction(np.array(q), np.array([q_min]), np.array([0, len(q)]))
    np.testing.assert_allclose(got, expected, atol=1e-15)


def test_q_margin_all_at_floor_becomes_uniform():
    got = q_margin_correction(np.array([0.0, 0.0, 0.0]), np.array([0.1]), np.array([0, 3]))
    np.testing.assert_allclose(got, [1 / 3] * 3)


@given(
    st.lists(st.floats(-0.5, 1.5), min_size=2, max_size=6),
    st.floats(0.001, 0.99),
)
def test_q_margin_restores_simplex_and_floor(raw, frac):
    K = len(raw)
    q_min = frac / K
    q = np.array(raw)
    got = q_margin_correction(q, np.array([q_min]), np.array([0, K]))
    assert abs(got.sum() - 1) < 1e-12
    assert np.all(got >= q_min - 1e-12)


@pytest.mark.parametrize(
    "counts,n_in,expected",
    [((5,), 0, 0.0675), ((5, 5, 5), 3, (1 - 0.73 ** (1 / 6)) / 4), ((2,), 0, 0.27)],
)
def test_default_q_min(counts, n_in, expected):
    np.testing.assert_allclose(default_q_min(counts, n_in), expected, rtol=1e-12)
    budget = 1 - mpmath.power(mpmath.mpf("0.73"), mpmath.mpf(1) / (n_in + len(counts)))
    oracle = [float(budget / (k - 1)) for k in counts]
    np.testing.assert_allclose(default_q_min(counts, n_in), oracle, rtol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_full_step_keeps_q_feasible(seed):
    rng = np.random.default_rng(seed)
    counts = (3, 5, 2)
    offsets = block_offsets(counts)
    q_min = default_q_min(counts, 2)
    state = CategoricalState.initial(counts, q_min)
    w = np.array([0.5, 0.3, 0.2])
    for _ in range(30):
        rows = np.zeros((3, offsets[-1]))
        for i in range(3):
            for n, k in enumerate(counts):
                rows[i, offsets[n] + (0 if rng.random() < 0.7 else rng.integers(k))] = 1
        step(state, rows, w)
        sums = np.add.reduceat(state.q, offsets[:-1])
        assert np.all(np.abs(sums - 1) < 1e-12)
        assert np.all(state.q >= np.repeat(q_min, counts) * (1 - 1e-12))
        assert state.delta > 0 and state.gamma >= 0
