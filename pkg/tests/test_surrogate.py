"""Softmax welfare surrogate: values, gradients, and the hard-welfare limit."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qboost import soft_welfare, soft_welfare_grad_z, surrogate_gap_bound


def rand_instance(seed, n_hi=6, m_hi=5):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, n_hi)), int(rng.integers(1, m_hi))
    bids = rng.uniform(0, 3, (n, m))
    q = rng.uniform(0, 2, (n, m))
    z = rng.uniform(0, 2, (n, m))
    v = rng.uniform(0, 3, (n, m))
    return bids, q, z, v


def test_two_bidder_frozen_value():
    # scores (1, 0) at tau 0.1 put weight 1/(1+e^-10) on the top slot
    bids = np.array([[1.0], [0.0]])
    v = np.array([[2.0], [1.0]])
    zeros = np.zeros((2, 1))
    sa = soft_welfare(bids, zeros, zeros, v, 0.1)
    assert sa.value == pytest.approx(1.9999546021312977, abs=1e-12)
    assert sa.sigma[0, 0] == pytest.approx(1.0 / (1.0 + np.exp(-10.0)))


def test_equal_scores_give_uniform_weights():
    n = 4
    bids = np.full((n, 2), 1.5)
    zeros = np.zeros((n, 2))
    v = np.arange(8, dtype=float).reshape(n, 2)
    sa = soft_welfare(bids, zeros, zeros, v, 0.3)
    assert np.allclose(sa.sigma, 1.0 / n)
    assert sa.value == pytest.approx(float(v.mean(axis=0).sum()))


def test_tau_validation():
    z = np.zeros((2, 1))
    for tau in (0.0, -0.5):
        with pytest.raises(ValueError):
            soft_welfare(z, z, z, z, tau)
        with pytest.raises(ValueError):
            soft_welfare_grad_z(z, z, z, z, tau)
        with pytest.raises(ValueError):
            surrogate_gap_bound(3, 4, tau)


def test_shape_validation():
    with pytest.raises(ValueError):
        soft_welfare(np.zeros((2, 1)), np.zeros((2, 1)), np.zeros((2, 1)),
                     np.zeros((3, 1)), 0.1)


def test_extreme_scores_stay_finite():
    bids = np.array([[1e6], [0.0]])
    zeros = np.zeros((2, 1))
    v = np.array([[1.0], [2.0]])
    sa = soft_welfare(bids, zeros, zeros, v, 0.01)
    assert np.isfinite(sa.value)
    assert sa.value == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([0.05, 0.1, 0.7]))
def test_sigma_columns_sum_to_one(seed, tau):
    bids, q, z, v = rand_instance(seed)
    sa = soft_welfare(bids, q, z, v, tau)
    assert np.allclose(sa.sigma.sum(axis=0), 1.0)
    assert np.all(sa.sigma >= 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([0.05, 0.1, 0.7]))
def test_grad_columns_sum_to_zero(seed, tau):
    bids, q, z, v = rand_instance(seed)
    g = soft_welfare_grad_z(bids, q, z, v, tau)
    assert np.allclose(g.sum(axis=0), 0.0, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_small_tau_recovers_hard_welfare(seed):
    bids, q, z, v = rand_instance(seed)
    scores = bids + q + z
    top2 = np.sort(scores, axis=0)[-2:, :]
    gap = top2[1] - top2[0]
    if np.any(gap < 0.01):
        return  # near-ties excluded: the limit is slow there
    winners = scores.argmax(axis=0)
    hard = float((v + q)[winners, np.arange(scores.shape[1])].sum())
    sa = soft_welfare(bids, q, z, v, 1e-4)
    assert sa.value == pytest.approx(hard, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([0.05, 0.2]))
def test_grad_matches_finite_differences(seed, tau):
    bids, q, z, v = rand_instance(seed, n_hi=5, m_hi=4)
    g = soft_welfare_grad_z(bids, q, z, v, tau)
    h = 1e-6
    fd = np.zeros_like(z)
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            zp = z.copy(); zp[i, j] += h
            zm = z.copy(); zm[i, j] -= h
            fd[i, j] = (soft_welfare(bids, q, zp, v, tau).value
                        - soft_welfare(bids, q, zm, v, tau).value) / (2 * h)
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-7)


def test_gap_bound_formula():
    assert surrogate_gap_bound(3, 4, 0.1) == pytest.approx(0.6 * np.log(4.0))
    assert surrogate_gap_bound(0, 4, 0.1) == 0.0
    assert surrogate_gap_bound(5, 1, 0.1) == 0.0  # single advertiser, no gap
    with pytest.raises(ValueError):
        surrogate_gap_bound(3, 0, 0.1)
