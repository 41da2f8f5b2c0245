"""Randomized self-checks for the mechanism's guarantees.

Four suites back the headline claims: projection feasibility and
idempotence, the welfare lower bound of the competitive auction, the
hard-versus-soft welfare gap, and agreement of every analytic gradient with
central finite differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .auction import TickState, optimal_welfare, run_auction, welfare
from .boost import competitive_factor, efficiency_bound, is_c_competitive, project, project_vjp
from .mlp import PARAM_KEYS, backward, forward, init_params
from .surrogate import soft_welfare, soft_welfare_grad_z, surrogate_gap_bound

BIG_BUDGET = 1e18
C_GRID = (0.0, 0.5, 2.0, 4.0)
ETA_GAMMA_GRID = ((0.6, 0.3), (0.6, 1.0), (0.75, 0.3), (0.75, 1.0))
TAU_GRID = (0.01, 0.1, 0.5)
KINK_MARGIN = 1e-4


@dataclass
class SuiteResult:
    suite: str
    trials: int
    failures: int
    elapsed: float
    lines: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failures == 0

    def summary(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return (f"{self.suite}: {status} ({self.trials - self.failures}/{self.trials} "
                f"trials ok, {self.elapsed:.1f}s)")


def _rand_instance(rng, n_max, m_max, tie_prob=0.1):
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    v = rng.lognormal(mean=0.0, sigma=0.5, size=(n, m))
    q = rng.uniform(0.0, 1.0, size=(n, m))
    if n >= 2 and rng.random() < tie_prob:
        i, k = rng.choice(n, size=2, replace=False)
        v[k] = v[i]
        q[k] = q[i]
    return n, m, v, q


def projection_suite(trials: int, seed: int = 20250801) -> SuiteResult:
    """project output is feasible at tol 1e-9 and a fixed point, 10k sizes."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    bad_feas = 0
    bad_idem = 0
    for k in range(trials):
        c = C_GRID[k % len(C_GRID)]
        n, m, v, q = _rand_instance(rng, 16, 8)
        scale = float(rng.lognormal(0.0, 1.0))
        z_raw = rng.normal(0.0, scale, size=(n, m))
        z = project(z_raw, v, q, c)
        if not is_c_competitive(z, v, q, c, tol=1e-9):
            bad_feas += 1
        if not np.array_equal(project(z, v, q, c), z):
            bad_idem += 1
    failures = bad_feas + bad_idem
    res = SuiteResult("projection", trials, failures, time.perf_counter() - t0)
    res.lines.append(f"feasibility at tol 1e-9: {trials - bad_feas}/{trials}")
    res.lines.append(f"idempotence (bit-exact): {trials - bad_idem}/{trials}")
    return res


def efficiency_bound_suite(trials: int, seed: int = 20250802) -> SuiteResult:
    """Realized welfare over optimal stays above the competitive bound.

    Bids are kappa_i * v with kappa_i drawn from [gamma, 1], boosts are
    projections of random raw values at c = competitive_factor(eta, gamma),
    and budgets never bind, matching the setting of the guarantee.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    failures = 0
    worst = np.inf
    for k in range(trials):
        eta, gamma = ETA_GAMMA_GRID[k % len(ETA_GAMMA_GRID)]
        n = int(rng.integers(2, 5))
        m = int(rng.integers(1, 4))
        v = rng.lognormal(mean=0.0, sigma=0.5, size=(n, m))
        q = rng.uniform(0.0, 1.0, size=(n, m))
        state = TickState(
            values=v, qualities=q,
            budgets=np.full(n, BIG_BUDGET), rois=np.ones(n),
            conv_prob=np.zeros((n, m)),
        )
        kappa = rng.uniform(gamma, 1.0, size=n)
        bids = kappa[:, None] * v
        c = competitive_factor(eta, gamma)
        z = project(rng.normal(0.0, 1.0, size=(n, m)), v, q, c)
        outcome = run_auction(state, bids, z)
        ratio = welfare(state, outcome).total / optimal_welfare(state)
        worst = min(worst, ratio - efficiency_bound(c, gamma))
        if ratio < efficiency_bound(c, gamma) - 1e-9:
            failures += 1
    res = SuiteResult("efficiency-bound", trials, failures, time.perf_counter() - t0)
    res.lines.append(f"eta x gamma grid {ETA_GAMMA_GRID}, worst margin over bound: {worst:.6f}")
    return res


def surrogate_gap_suite(trials: int, seed: int = 20250803) -> SuiteResult:
    """Hard minus soft welfare sits in [0, 2*m*tau*ln n] for every tau.

    Asserted with truthful bids: both bounds for projected boosts, and the
    upper bound for arbitrary members of the feasible set (projections of
    wild raw values at a random competition factor). Raw unprojected boosts
    are outside the guarantee; their violations are only counted.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    failures = 0
    raw_upper_viol = 0
    raw_lower_viol = 0
    for k in range(trials):
        n, m, v, q = _rand_instance(rng, 8, 8)
        state = TickState(
            values=v, qualities=q,
            budgets=np.full(n, BIG_BUDGET), rois=np.ones(n),
            conv_prob=np.zeros((n, m)),
        )
        bids = v.copy()
        c = C_GRID[k % len(C_GRID)]
        z_proj = project(rng.normal(0.0, 1.0, size=(n, m)), v, q, c)
        c_free = float(rng.uniform(0.0, 5.0))
        z_free = project(rng.normal(0.0, 10.0, size=(n, m)), v, q, c_free)
        z_raw = rng.normal(0.0, 1.0, size=(n, m))
        hard_proj = welfare(state, run_auction(state, bids, z_proj)).total
        hard_free = welfare(state, run_auction(state, bids, z_free)).total
        hard_raw = welfare(state, run_auction(state, bids, z_raw)).total
        for tau in TAU_GRID:
            bound = surrogate_gap_bound(m, n, tau)
            gap = hard_proj - soft_welfare(bids, q, z_proj, v, tau).value
            if not (-1e-9 <= gap <= bound + 1e-9):
                failures += 1
            gap_free = hard_free - soft_welfare(bids, q, z_free, v, tau).value
            if gap_free > bound + 1e-9:
                failures += 1
            gap_raw = hard_raw - soft_welfare(bids, q, z_raw, v, tau).value
            if gap_raw > bound + 1e-9:
                raw_upper_viol += 1
            if gap_raw < -1e-9:
                raw_lower_viol += 1
    res = SuiteResult("surrogate-gap", trials, failures, time.perf_counter() - t0)
    res.lines.append(f"projected boosts, both bounds, tau in {TAU_GRID}: asserted")
    res.lines.append("feasible-set boosts, upper bound: asserted")
    res.lines.append(
        "unprojected raw boosts (outside the guarantee), violations observed: "
        f"upper {raw_upper_viol}, lower {raw_lower_viol} of {trials * len(TAU_GRID)}"
    )
    return res


def _fd_soft_grad(bids, q, z, v, tau, h=1e-5):
    g = np.zeros_like(z)
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            zp = z.copy(); zp[i, j] += h
            zm = z.copy(); zm[i, j] -= h
            g[i, j] = (soft_welfare(bids, q, zp, v, tau).value
                       - soft_welfare(bids, q, zm, v, tau).value) / (2 * h)
    return g


def _close(a, b, rtol, atol):
    return np.all(np.abs(a - b) <= rtol * np.maximum(np.abs(a), np.abs(b)) + atol)


def gradient_suite(trials: int, seed: int = 20250804) -> SuiteResult:
    """All three analytic gradients against central finite differences."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    fail_soft = 0
    fail_mlp = 0
    fail_proj = 0

    for k in range(trials):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, 5))
        v = rng.lognormal(0.0, 0.5, size=(n, m))
        q = rng.uniform(0.0, 1.0, size=(n, m))
        bids = rng.uniform(0.2, 1.0, size=(n, m)) * v
        z = rng.normal(0.0, 0.5, size=(n, m))
        tau = (0.1, 0.5)[k % 2]
        analytic = soft_welfare_grad_z(bids, q, z, v, tau)
        fd = _fd_soft_grad(bids, q, z, v, tau)
        if not _close(analytic, fd, rtol=1e-4, atol=1e-7):
            fail_soft += 1

    h = 1e-5
    for k in range(trials):
        params = init_params(seed + k)
        for key, t in params.tensors():
            t += rng.normal(0.0, 0.3 if key.startswith("W") else 0.1, size=t.shape)
        for _ in range(50):
            x = rng.normal(0.0, 1.0, size=(int(rng.integers(2, 13)), 4))
            pre1 = x @ params.W1 + params.b1
            pre2 = np.maximum(pre1, 0.0) @ params.W2 + params.b2
            if min(np.abs(pre1).min(), np.abs(pre2).min()) > 10 * h:
                break
        upstream = rng.normal(0.0, 1.0, size=x.shape[0])
        _, tape = forward(params, x, train=False)
        grads = backward(params, tape, upstream)
        ok = True
        for key in PARAM_KEYS:
            t = getattr(params, key)
            fd = np.zeros_like(t)
            flat = t.reshape(-1)
            fdf = fd.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                fp = float(forward(params, x, train=False)[0] @ upstream)
                flat[idx] = orig - h
                fm = float(forward(params, x, train=False)[0] @ upstream)
                flat[idx] = orig
                fdf[idx] = (fp - fm) / (2 * h)
            if not _close(grads[key], fd, rtol=1e-4, atol=1e-8):
                ok = False
        if not ok:
            fail_mlp += 1

    for k in range(trials):
        c = C_GRID[k % len(C_GRID)]
        n, m, v, q = _rand_instance(rng, 10, 6, tie_prob=0.0)
        z_raw = rng.normal(0.0, 1.0, size=(n, m))
        keep_cols = _columns_away_from_kinks(z_raw, v, q, c, KINK_MARGIN)
        if not keep_cols.any():
            continue
        upstream = rng.normal(0.0, 1.0, size=(n, m))
        analytic = project_vjp(z_raw, v, q, c, upstream)
        hh = 1e-6
        bad = False
        for j in np.nonzero(keep_cols)[0]:
            for i in range(n):
                zp = z_raw.copy(); zp[i, j] += hh
                zm = z_raw.copy(); zm[i, j] -= hh
                fd = ((upstream * project(zp, v, q, c)).sum()
                      - (upstream * project(zm, v, q, c)).sum()) / (2 * hh)
                if abs(fd - analytic[i, j]) > 1e-6:
                    bad = True
        if bad:
            fail_proj += 1

    failures = fail_soft + fail_mlp + fail_proj
    res = SuiteResult("gradients", 3 * trials, failures, time.perf_counter() - t0)
    res.lines.append(f"soft welfare grad vs FD (rel 1e-4): {trials - fail_soft}/{trials}")
    res.lines.append(f"network backward vs FD (rel 1e-4): {trials - fail_mlp}/{trials}")
    res.lines.append(
        f"projection vjp vs FD (abs 1e-6, kink margin {KINK_MARGIN:g}): "
        f"{trials - fail_proj}/{trials}")
    return res


def _columns_away_from_kinks(z_raw, v, q, c, margin):
    """Columns where no slot's raw value sits within margin of its lift floor."""
    n, m = z_raw.shape
    order = np.argsort(v + q, axis=0, kind="stable")
    rs = np.take_along_axis(v + q, order, axis=0)
    zs = np.take_along_axis(z_raw, order, axis=0)
    out = zs.copy()
    out[0] = 0.0
    dist = np.full(m, np.inf)
    for k in range(1, n):
        floor = out[k - 1] + c * (rs[k] - rs[k - 1])
        dist = np.minimum(dist, np.abs(out[k] - floor))
        out[k] = np.where(out[k] < floor, floor, out[k])
    return dist > margin


SUITES = {
    "projection": projection_suite,
    "efficiency-bound": efficiency_bound_suite,
    "surrogate-gap": surrogate_gap_suite,
    "gradients": gradient_suite,
}
