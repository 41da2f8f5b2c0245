"""Online boost learning and the baseline boost policies.

The trainer runs the live environment tick by tick: build features, predict
raw boosts, project them onto the competitive set, run the auction, then
step the network against the smoothed welfare objective. Baselines cover no
boost, proportional boosts on value (optionally plus quality), and boosts
derived from empirical virtual values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .auction import TickState, min_bid_ratio, optimal_welfare, run_auction, welfare
from .boost import competitive_factor, project, project_vjp
from .environment import BiddingEnv, Episode, agent_bids, settle_tick
from .mlp import (
    PredictorParams,
    add_grads,
    backward,
    forward,
    grad_global_norm,
    init_params,
    optimizer_step,
    schedule_and_stop,
)
from .surrogate import soft_welfare, soft_welfare_grad_z

UNIFORM_ALPHA = 0.2
VIRTUAL_VALUE_BINS = 64
VIRTUAL_VALUE_WINDOW = 2048
VIRTUAL_VALUE_MIN_SAMPLES = 100
DENSITY_FLOOR = 1e-6

POLICY_NAMES = ("qboost", "none", "uniform_vq", "uniform_v", "myerson_vq", "myerson_v")


@dataclass
class TrainConfig:
    episodes: int = 500
    lr: float = 1e-4
    tau: float = 0.1
    l2_lambda: float = 100.0
    clip_norm: float = 1.0
    dropout_p: float = 0.2
    batch_cap: int = 256          # max feature rows per forward pass
    use_projection: bool = True   # False ablates the competitive layer
    seed: int = 0
    plateau_patience: int = 5
    stop_patience: int = 30
    rel_improvement: float = 1e-4
    lr_factor: float = 0.5

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpisodeMetrics:
    """Per-tick series for one episode plus its daily aggregates.

    For training episodes ``loss`` is the surrogate objective (optimal minus
    soft welfare plus the L2 penalty) and ``grad_norm`` the pre-clip global
    gradient norm per tick. For evaluation episodes ``loss`` is the realized
    welfare gap (optimal minus hard welfare) and ``grad_norm`` is empty.
    """

    policy: str
    episode: int
    welfare: np.ndarray
    opt_welfare: np.ndarray
    cum_ratio: np.ndarray
    revenue: np.ndarray
    loss: np.ndarray
    grad_norm: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def daily_welfare(self) -> float:
        return float(self.welfare.sum())

    @property
    def daily_revenue(self) -> float:
        return float(self.revenue.sum())

    @property
    def mean_grad_norm(self) -> float:
        return float(self.grad_norm.mean()) if self.grad_norm.size else 0.0


class RunningMean:
    """Mean of every value seen so far in an episode."""

    def __init__(self):
        self.total = 0.0
        self.count = 0

    def update(self, values: np.ndarray) -> None:
        self.total += float(values.sum())
        self.count += values.size

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 1.0


def build_features(
    state: TickState,
    initial_budgets: np.ndarray,
    running_mean_v: float,
) -> np.ndarray:
    """Per-pair feature tensor of shape (n, m, 4).

    Columns: value over the running mean value, quality over the running
    mean value, remaining budget fraction, and tick progress t/horizon.
    """
    n, m = state.n, state.m
    denom = running_mean_v if running_mean_v > 0 else 1.0
    feats = np.empty((n, m, 4))
    feats[:, :, 0] = state.values / denom
    feats[:, :, 1] = state.qualities / denom
    init = np.asarray(initial_budgets, dtype=float)
    frac = np.divide(state.budgets, init, out=np.zeros(n), where=init > 0)
    feats[:, :, 2] = frac[:, None]
    feats[:, :, 3] = state.tick / state.horizon
    return feats


def _chunk_slices(m: int, n: int, cap: int):
    """Row slices over impression-major feature rows, whole impressions per
    chunk, at most about cap rows each."""
    per = max(1, cap // max(n, 1))
    return [(j * n, min(j + per, m) * n) for j in range(0, m, per)]


def _impression_major_rows(feats: np.ndarray) -> np.ndarray:
    # (n, m, 4) -> (m*n, 4) with all advertisers of an impression contiguous
    return np.ascontiguousarray(feats.transpose(1, 0, 2)).reshape(-1, 4)


def empirical_virtual_value(samples: np.ndarray, r) -> np.ndarray | float:
    """Virtual value psi(r) = r - (1 - F(r)) / f(r) from an empirical window.

    F is the empirical CDF of the window and f a 64-bin histogram density
    over the window's range, floored at 1e-6. Where no sample exceeds r the
    hazard term vanishes and psi(r) = r. Intended for windows of at least
    100 samples; raises on an empty window.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("empty sample window")
    scalar = np.isscalar(r) or np.ndim(r) == 0
    rq = np.atleast_1d(np.asarray(r, dtype=float))
    sorted_s = np.sort(samples)
    N = samples.size
    survival = 1.0 - np.searchsorted(sorted_s, rq, side="right") / N
    lo, hi = float(sorted_s[0]), float(sorted_s[-1])
    if hi > lo:
        counts, edges = np.histogram(samples, bins=VIRTUAL_VALUE_BINS, range=(lo, hi))
        width = (hi - lo) / VIRTUAL_VALUE_BINS
        idx = np.clip(((rq - lo) / width).astype(int), 0, VIRTUAL_VALUE_BINS - 1)
        density = np.maximum(counts[idx] / (N * width), DENSITY_FLOOR)
    else:
        density = np.full(rq.shape, DENSITY_FLOOR)
    psi = np.where(survival <= 0.0, rq, rq - survival / density)
    return float(psi[0]) if scalar else psi.reshape(np.shape(r))


class _NoBoost:
    name = "none"

    def boosts(self, state: TickState, bids: np.ndarray) -> np.ndarray:
        return np.zeros((state.n, state.m))

    def observe(self, state: TickState, bids: np.ndarray) -> None:
        pass


class _UniformBoost:
    def __init__(self, include_quality: bool):
        self.include_quality = include_quality
        self.name = "uniform_vq" if include_quality else "uniform_v"

    def boosts(self, state: TickState, bids: np.ndarray) -> np.ndarray:
        base = state.values + state.qualities if self.include_quality else state.values
        return UNIFORM_ALPHA * base

    def observe(self, state: TickState, bids: np.ndarray) -> None:
        pass


class _MyersonBoost:
    """Boost to the empirical virtual value: z = psi(r) - r, never positive.

    The sample window trails the last 2048 observations of r and includes
    the current tick, so the first tick already has data. Below 100 samples
    the boost stays 0.
    """

    def __init__(self, include_quality: bool):
        self.include_quality = include_quality
        self.name = "myerson_vq" if include_quality else "myerson_v"
        self.window = np.empty(0)

    def boosts(self, state: TickState, bids: np.ndarray) -> np.ndarray:
        r = state.values + state.qualities if self.include_quality else state.values
        self.window = np.concatenate([self.window, r.ravel()])[-VIRTUAL_VALUE_WINDOW:]
        if self.window.size < VIRTUAL_VALUE_MIN_SAMPLES:
            return np.zeros((state.n, state.m))
        return empirical_virtual_value(self.window, r) - r

    def observe(self, state: TickState, bids: np.ndarray) -> None:
        pass


class QBoostPolicy:
    """Network boosts projected onto the competitive set.

    gamma is estimated from the previous tick's realized bids (1.0 on the
    first tick), which sets the competition factor used by the projection.
    """

    name = "qboost"

    def __init__(self, params: PredictorParams, eta: float, batch_cap: int = 256):
        self.params = params
        self.eta = eta
        self.batch_cap = batch_cap
        self.gamma = 1.0
        self.running = RunningMean()
        self.initial_budgets: np.ndarray | None = None

    def raw_boosts(self, state: TickState) -> np.ndarray:
        if self.initial_budgets is None:
            self.initial_budgets = state.budgets.copy()
        self.running.update(state.values)
        feats = build_features(state, self.initial_budgets, self.running.mean)
        rows = _impression_major_rows(feats)
        out = np.empty(rows.shape[0])
        for a, b in _chunk_slices(state.m, state.n, self.batch_cap):
            out[a:b], _ = forward(self.params, rows[a:b], train=False)
        return out.reshape(state.m, state.n).T

    def boosts(self, state: TickState, bids: np.ndarray) -> np.ndarray:
        c = competitive_factor(self.eta, self.gamma)
        raw = self.raw_boosts(state)
        return project(raw, state.values, state.qualities, c)

    def observe(self, state: TickState, bids: np.ndarray) -> None:
        if np.any(state.values > 0):
            self.gamma = min_bid_ratio(bids, state.values)


def make_policy(name: str, eta: float, params: PredictorParams | None = None,
                batch_cap: int = 256):
    if name == "qboost":
        if params is None:
            raise ValueError("qboost policy needs model parameters")
        return QBoostPolicy(params, eta, batch_cap)
    if name == "none":
        return _NoBoost()
    if name == "uniform_vq":
        return _UniformBoost(True)
    if name == "uniform_v":
        return _UniformBoost(False)
    if name == "myerson_vq":
        return _MyersonBoost(True)
    if name == "myerson_v":
        return _MyersonBoost(False)
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")


def train(config: TrainConfig, env: BiddingEnv):
    """Online training loop. Returns (params, per-episode metrics list).

    Each tick: estimate gamma from the previous tick's bids, predict and
    project boosts, run the auction, take one optimizer step on the loss
    optimal welfare minus soft welfare plus the L2 penalty, then settle the
    tick so budgets and quality drift into the next one. The learning rate
    halves on loss plateaus and training stops early when the per-episode
    loss stops improving. Raises on a non-finite loss.
    """
    params = init_params(config.seed, lr=config.lr, dropout_p=config.dropout_p)
    drop_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xD80]))
    eta = env.config.eta
    tau = config.tau
    all_metrics: list[EpisodeMetrics] = []
    episode_losses: list[float] = []

    for ep in range(config.episodes):
        env.reset(ep)
        running = RunningMean()
        gamma = 1.0
        initial_budgets = np.array([a.initial_budget for a in env.accounts])
        wel_l, opt_l, rat_l, rev_l, loss_l, gn_l = [], [], [], [], [], []
        cum_wel = 0.0
        cum_opt = 0.0
        while not env.done():
            state = env.tick_state()
            bids = env.bids(state)
            c = competitive_factor(eta, gamma)

            running.update(state.values)
            feats = build_features(state, initial_budgets, running.mean)
            rows = _impression_major_rows(feats)
            chunks = _chunk_slices(state.m, state.n, config.batch_cap)
            raw_flat = np.empty(rows.shape[0])
            tapes = []
            for a, b in chunks:
                raw_flat[a:b], tape = forward(params, rows[a:b], train=True, rng=drop_rng)
                tapes.append(tape)
            raw = raw_flat.reshape(state.m, state.n).T

            if config.use_projection:
                z = project(raw, state.values, state.qualities, c)
            else:
                z = raw
            outcome = run_auction(state, bids, z)
            soft = soft_welfare(bids, state.qualities, z, state.values, tau)
            opt = optimal_welfare(state)
            loss = opt - soft.value + config.l2_lambda * params.l2_norm_sq()
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at episode {ep}, tick {state.tick}")

            gz = -soft_welfare_grad_z(bids, state.qualities, z, state.values, tau)
            if config.use_projection:
                graw = project_vjp(raw, state.values, state.qualities, c, gz)
            else:
                graw = gz
            upstream = graw.T.reshape(-1)  # impression-major, matching rows
            grads = None
            for (a, b), tape in zip(chunks, tapes):
                grads = add_grads(grads, backward(params, tape, upstream[a:b]))
            gn_l.append(grad_global_norm(params, grads, config.l2_lambda))
            optimizer_step(params, grads, config.l2_lambda, config.clip_norm)

            w = welfare(state, outcome)
            cum_wel += w.total
            cum_opt += opt
            wel_l.append(w.total)
            opt_l.append(opt)
            rat_l.append(cum_wel / cum_opt if cum_opt > 0 else 0.0)
            rev_l.append(w.revenue)
            loss_l.append(loss)

            env.settle(state, outcome)
            if np.any(state.values > 0):
                gamma = min_bid_ratio(bids, state.values)

        all_metrics.append(EpisodeMetrics(
            policy="qboost" if config.use_projection else "qboost_nolayer",
            episode=ep,
            welfare=np.array(wel_l), opt_welfare=np.array(opt_l),
            cum_ratio=np.array(rat_l), revenue=np.array(rev_l),
            loss=np.array(loss_l), grad_norm=np.array(gn_l),
        ))
        episode_losses.append(float(np.mean(loss_l)))
        decision = schedule_and_stop(
            episode_losses,
            plateau_patience=config.plateau_patience,
            stop_patience=config.stop_patience,
            rel_improvement=config.rel_improvement,
        )
        if decision.lr_factor_applied:
            params.lr *= config.lr_factor
        if decision.stop:
            break
    return params, all_metrics


def evaluate(
    policy_name: str,
    episode: Episode,
    params: PredictorParams | None = None,
    episode_index: int = 0,
    batch_cap: int = 256,
) -> EpisodeMetrics:
    """Replay a materialized episode under one boost policy.

    The recorded impression stream (values, qualities, conversion odds) is
    fixed, so the optimal welfare series is the same whatever the policy.
    Budgets, pacing and revenue still evolve with this policy's outcomes.
    Settlement draws depend only on the episode seed, keeping paired
    comparisons across policies on common random numbers.
    """
    policy = make_policy(policy_name, episode.config.eta, params, batch_cap)
    accounts = episode.fresh_accounts()
    horizon = len(episode.ticks)
    settle_ss = np.random.SeedSequence([episode.seed, 0x5E77])
    settle_rngs = [np.random.default_rng(s) for s in settle_ss.spawn(horizon)]

    wel_l, opt_l, rat_l, rev_l, loss_l = [], [], [], [], []
    cum_wel = 0.0
    cum_opt = 0.0
    for t, recorded in enumerate(episode.ticks):
        state = TickState(
            values=recorded.values,
            qualities=recorded.qualities,
            budgets=np.array([a.remaining_budget for a in accounts]),
            rois=recorded.rois,
            conv_prob=recorded.conv_prob,
            tick=t,
            horizon=horizon,
        )
        bids = agent_bids(state, accounts, episode.config)
        z = policy.boosts(state, bids)
        outcome = run_auction(state, bids, z)
        w = welfare(state, outcome)
        opt = optimal_welfare(state)
        settle_tick(state, outcome, accounts, settle_rngs[t],
                    unit_value=episode.config.unit_value)
        policy.observe(state, bids)

        cum_wel += w.total
        cum_opt += opt
        wel_l.append(w.total)
        opt_l.append(opt)
        rat_l.append(cum_wel / cum_opt if cum_opt > 0 else 0.0)
        rev_l.append(w.revenue)
        loss_l.append(opt - w.total)

    return EpisodeMetrics(
        policy=policy_name,
        episode=episode_index,
        welfare=np.array(wel_l), opt_welfare=np.array(opt_l),
        cum_ratio=np.array(rat_l), revenue=np.array(rev_l),
        loss=np.array(loss_l),
    )
