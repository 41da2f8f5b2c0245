"""Competitive boost constraints and the projection onto them.

A boost matrix z is c-competitive when, per impression, ranking advertisers
by value plus quality (ascending, ties by index), the boost of the lowest
rank is 0 and each step up the ranking increases the boost by at least
c times the step in value plus quality. Enforcing this keeps the auction's
welfare within a provable factor of the optimum no matter what the raw
boosts were.
"""

from __future__ import annotations

import numpy as np


def competitive_factor(eta: float, gamma: float) -> float:
    """Boost competition factor c for target efficiency eta and bid level gamma.

    c = 1/(1-eta) - 2 when gamma >= 1, else 1/(1-eta) - gamma - 1,
    clamped below at 0. Raises for eta outside [0, 1).
    """
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must satisfy 0 <= eta < 1")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if gamma >= 1.0:
        c = 1.0 / (1.0 - eta) - 2.0
    else:
        c = 1.0 / (1.0 - eta) - gamma - 1.0
    return max(0.0, c)


def efficiency_bound(c: float, gamma: float) -> float:
    """Guaranteed welfare fraction for a c-competitive boost at bid level gamma."""
    if c < 0 or gamma < 0:
        raise ValueError("c and gamma must be non-negative")
    if gamma >= 1.0:
        return (c + 1.0) / (c + 2.0)
    return (c + gamma) / (c + gamma + 1.0)


def _rank_orders(v: np.ndarray, q: np.ndarray) -> np.ndarray:
    # Ascending by v+q per impression, stable so ties keep index order.
    return np.argsort(v + q, axis=0, kind="stable")


def is_c_competitive(
    z: np.ndarray, v: np.ndarray, q: np.ndarray, c: float, tol: float = 0.0
) -> bool:
    """Check the c-competitive conditions within tolerance tol.

    Per impression, after sorting by v+q ascending (stable): the lowest
    ranked boost must be within tol of 0, consecutive increments must be at
    least c * (step in v+q) - tol, and all boosts at least -tol.
    """
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    if z.shape != v.shape or q.shape != v.shape:
        raise ValueError("z, v, q must share shape (n, m)")
    if np.any(z < -tol):
        return False
    order = _rank_orders(v, q)
    rs = np.take_along_axis(v + q, order, axis=0)
    zs = np.take_along_axis(z, order, axis=0)
    if np.any(np.abs(zs[0]) > tol):
        return False
    inc = np.diff(zs, axis=0)
    need = c * np.diff(rs, axis=0)
    return bool(np.all(inc >= need - tol))


def project(z_raw: np.ndarray, v: np.ndarray, q: np.ndarray, c: float) -> np.ndarray:
    """Project raw boosts onto the c-competitive set, impression by impression.

    Walks each impression's advertisers in ascending v+q order: the lowest
    slot is set to 0, and every later slot is lifted to the previous
    (already projected) boost plus c times the v+q step whenever it falls
    short. Raw values already above that floor are kept. The result is
    clamped at 0, feasible at tolerance 0, and a fixed point of reapplication.
    """
    z_raw = np.asarray(z_raw, dtype=float)
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    if z_raw.shape != v.shape or q.shape != v.shape:
        raise ValueError("z_raw, v, q must share shape (n, m)")
    if c < 0:
        raise ValueError("c must be non-negative")
    n, _ = z_raw.shape
    order = _rank_orders(v, q)
    rs = np.take_along_axis(v + q, order, axis=0)
    zs = np.take_along_axis(z_raw, order, axis=0)
    out = zs.copy()
    out[0] = 0.0
    for k in range(1, n):
        need = c * (rs[k] - rs[k - 1])
        short = out[k] - out[k - 1] < need
        out[k] = np.where(short, out[k - 1] + need, out[k])
    out = np.maximum(out, 0.0)
    result = np.empty_like(out)
    np.put_along_axis(result, order, out, axis=0)
    return result


def project_vjp(
    z_raw: np.ndarray,
    v: np.ndarray,
    q: np.ndarray,
    c: float,
    upstream: np.ndarray,
) -> np.ndarray:
    """Vector-Jacobian product of ``project`` at z_raw.

    The projection is piecewise linear. Slots kept at their raw value pass
    their adjoint straight through; slots that were lifted depend only on the
    previous slot in rank order, so their adjoint is carried down the lift
    chain. The lowest-ranked slot is overwritten with the constant 0 and
    absorbs whatever reaches it, and slots zeroed by the final clamp pass
    nothing. At an exact kink (raw value equal to its floor) the lifted
    branch is used.
    """
    z_raw = np.asarray(z_raw, dtype=float)
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if not (z_raw.shape == v.shape == q.shape == upstream.shape):
        raise ValueError("z_raw, v, q, upstream must share shape (n, m)")
    if c < 0:
        raise ValueError("c must be non-negative")
    n, m = z_raw.shape
    order = _rank_orders(v, q)
    rs = np.take_along_axis(v + q, order, axis=0)
    zs = np.take_along_axis(z_raw, order, axis=0)
    us = np.take_along_axis(upstream, order, axis=0)

    # Replay the forward walk to recover branch choices and pre-clamp values.
    out = zs.copy()
    out[0] = 0.0
    lifted = np.zeros((n, m), dtype=bool)
    for k in range(1, n):
        need = c * (rs[k] - rs[k - 1])
        lifted[k] = out[k] - out[k - 1] <= need  # ties count as lifted
        short = out[k] - out[k - 1] < need
        out[k] = np.where(short, out[k - 1] + need, out[k])

    us = np.where(out < 0.0, 0.0, us)  # clamp-zeroed slots contribute nothing

    grad_sorted = np.zeros((n, m))
    carry = np.zeros(m)
    for k in range(n - 1, 0, -1):
        adj = us[k] + carry
        grad_sorted[k] = np.where(lifted[k], 0.0, adj)
        carry = np.where(lifted[k], adj, 0.0)
    # Rank 0 is the constant 0; its adjoint (us[0] + carry) is dropped.

    grad = np.empty_like(grad_sorted)
    np.put_along_axis(grad, order, grad_sorted, axis=0)
    return grad
