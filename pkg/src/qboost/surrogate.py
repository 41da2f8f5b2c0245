"""Smoothed welfare objective for gradient-based boost learning.

Replaces the hard argmax allocation with a per-impression softmax over
composite scores at temperature tau. The surrogate never exceeds the hard
welfare by more than 2*m*tau*ln(n) when the winner carries the top boost,
and it recovers the hard welfare as tau goes to 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SoftAssignment:
    """Soft welfare value with the softmax weights that produced it."""

    value: float
    sigma: np.ndarray  # (n, m), columns sum to 1
    tau: float


def _soft_weights(scores: np.ndarray, tau: float) -> np.ndarray:
    shifted = (scores - scores.max(axis=0, keepdims=True)) / tau
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def soft_welfare(
    bids: np.ndarray,
    q: np.ndarray,
    z: np.ndarray,
    v: np.ndarray,
    tau: float,
) -> SoftAssignment:
    """Softmax-weighted welfare sum_j sum_i sigma_ij * (v_ij + q_ij).

    sigma is the softmax over advertisers of (bids + q + z) / tau, computed
    with max subtraction for stability. Raises when tau <= 0.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    bids = np.asarray(bids, dtype=float)
    q = np.asarray(q, dtype=float)
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (bids.shape == q.shape == z.shape == v.shape):
        raise ValueError("bids, q, z, v must share shape (n, m)")
    sigma = _soft_weights(bids + q + z, tau)
    value = float((sigma * (v + q)).sum())
    return SoftAssignment(value, sigma, tau)


def soft_welfare_grad_z(
    bids: np.ndarray,
    q: np.ndarray,
    z: np.ndarray,
    v: np.ndarray,
    tau: float,
) -> np.ndarray:
    """Analytic gradient of the soft welfare with respect to the boosts z.

    d value / d z_kj = sigma_kj * (r_kj - sum_i sigma_ij r_ij) / tau with
    r = v + q, so every impression's gradient column sums to 0.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    bids = np.asarray(bids, dtype=float)
    q = np.asarray(q, dtype=float)
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    sigma = _soft_weights(bids + q + z, tau)
    r = v + q
    mean_r = (sigma * r).sum(axis=0, keepdims=True)
    return sigma * (r - mean_r) / tau


def surrogate_gap_bound(m: int, n: int, tau: float) -> float:
    """Worst-case hard-minus-soft welfare gap: 2 * m * tau * ln(n)."""
    if m < 0 or n < 1:
        raise ValueError("need m >= 0 impressions and n >= 1 advertisers")
    if tau <= 0:
        raise ValueError("tau must be positive")
    return 2.0 * m * tau * float(np.log(n))
