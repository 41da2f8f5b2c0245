"""Synthetic bidding environment: advertisers, impressions, settlement.

Money is normalized so the mean commercial value is 1.0 and one quality
unit is worth 0.01. Advertiser accounts carry a quality score in [0, 50]
units that drifts with user events: +5 on a conversion, -30 on a bad-ad
report, +1 otherwise. Impression quality is drawn per impression in units
and added to the account score before conversion to money.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .auction import AuctionOutcome, TickState

QUALITY_UNIT_MAX = 50.0
CONVERSION_DELTA = 5.0
REPORT_DELTA = -30.0
NO_EVENT_DELTA = 1.0
REPORT_NUMERATOR = 100.0
REPORT_SCALE = 1000.0
REPORT_CAP = 0.1


@dataclass
class EpisodeConfig:
    """Knobs for the synthetic environment. Defaults follow the reference setup."""

    n_advertisers: int = 48
    ticks_per_day: int = 48
    imps_per_tick: int = 48
    eta: float = 0.75                    # target efficiency for the boost layer
    seed: int = 0
    value_mean: float = 1.0              # lognormal values rescaled to this mean
    value_sigma: float = 0.5
    conv_prob_max: float = 0.1
    imp_quality_mean: float = 25.0       # impression quality draw, in units
    imp_quality_sd: float = 10.0
    imp_quality_clip: float = 100.0
    budget_range: tuple = (40.0, 80.0)
    roi_range: tuple = (0.8, 1.6)
    pid_fraction: float = 0.25           # share of accounts using pid pacing
    multiplier_range: tuple = (0.35, 0.95)
    multiplier_cap: float = 1.0
    gamma_min: float = 0.3               # floor for every pacing multiplier
    pid_p_gain: float = 1.0
    pid_i_gain: float = 0.1

    @property
    def unit_value(self) -> float:
        """Money per quality unit: 0.01 times the mean commercial value."""
        return 0.01 * self.value_mean

    def to_dict(self) -> dict:
        return {
            "n_advertisers": self.n_advertisers,
            "ticks_per_day": self.ticks_per_day,
            "imps_per_tick": self.imps_per_tick,
            "eta": self.eta,
            "seed": self.seed,
            "value_mean": self.value_mean,
            "value_sigma": self.value_sigma,
            "conv_prob_max": self.conv_prob_max,
            "imp_quality_mean": self.imp_quality_mean,
            "imp_quality_sd": self.imp_quality_sd,
            "imp_quality_clip": self.imp_quality_clip,
            "budget_range": list(self.budget_range),
            "roi_range": list(self.roi_range),
            "pid_fraction": self.pid_fraction,
            "multiplier_range": list(self.multiplier_range),
            "multiplier_cap": self.multiplier_cap,
            "gamma_min": self.gamma_min,
            "pid_p_gain": self.pid_p_gain,
            "pid_i_gain": self.pid_i_gain,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeConfig":
        kwargs = dict(d)
        for key in ("budget_range", "roi_range", "multiplier_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        unknown = set(kwargs) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown env config fields: {sorted(unknown)}")
        return cls(**kwargs)


@dataclass
class AdvertiserAccount:
    """Mutable per-advertiser state carried across ticks of an episode."""

    advertiser_id: str
    initial_budget: float
    remaining_budget: float
    roi: float
    strategy: str                       # "fixed" or "pid"
    pacing_multiplier: float
    quality_units: float = QUALITY_UNIT_MAX
    cum_payment: float = 0.0
    cum_value_won: float = 0.0
    pid_integral: float = 0.0

    def reset(self) -> None:
        self.remaining_budget = self.initial_budget
        self.quality_units = QUALITY_UNIT_MAX
        self.cum_payment = 0.0
        self.cum_value_won = 0.0
        self.pid_integral = 0.0


def make_accounts(config: EpisodeConfig, rng: np.random.Generator) -> list:
    """Draw an advertiser population from the config ranges."""
    n = config.n_advertisers
    budgets = rng.uniform(*config.budget_range, size=n)
    rois = rng.uniform(*config.roi_range, size=n)
    mults = rng.uniform(*config.multiplier_range, size=n)
    n_pid = int(round(config.pid_fraction * n))
    strategies = ["pid"] * n_pid + ["fixed"] * (n - n_pid)
    accounts = []
    for i in range(n):
        accounts.append(AdvertiserAccount(
            advertiser_id=f"adv{i:03d}",
            initial_budget=float(budgets[i]),
            remaining_budget=float(budgets[i]),
            roi=float(rois[i]),
            strategy=strategies[i],
            pacing_multiplier=float(mults[i]),
        ))
    return accounts


def generate_tick(
    config: EpisodeConfig,
    accounts: list,
    rng: np.random.Generator,
    tick: int = 0,
    horizon: int | None = None,
) -> TickState:
    """Draw one tick of impressions against the current account state.

    Values are i.i.d. lognormal rescaled so their mean is config.value_mean.
    Impression quality is normal in units, clipped to [0, clip], shared by
    all advertisers of that impression; the money quality adds the account
    score. Conversion probabilities are uniform on [0, conv_prob_max].
    """
    n = len(accounts)
    m = config.imps_per_tick
    mu = np.log(config.value_mean) - 0.5 * config.value_sigma ** 2
    values = rng.lognormal(mean=mu, sigma=config.value_sigma, size=(n, m))
    imp_units = np.clip(
        rng.normal(config.imp_quality_mean, config.imp_quality_sd, size=m),
        0.0, config.imp_quality_clip,
    )
    account_units = np.array([a.quality_units for a in accounts])
    qualities = (account_units[:, None] + imp_units[None, :]) * config.unit_value
    conv_prob = rng.uniform(0.0, config.conv_prob_max, size=(n, m))
    return TickState(
        values=values,
        qualities=qualities,
        budgets=np.array([a.remaining_budget for a in accounts]),
        rois=np.array([a.roi for a in accounts]),
        conv_prob=conv_prob,
        tick=tick,
        horizon=horizon if horizon is not None else config.ticks_per_day,
    )


def agent_bids(state: TickState, accounts: list, config: EpisodeConfig) -> np.ndarray:
    """Bids kappa_i * v for every advertiser; pid accounts repace first.

    The pid update runs once per tick: the multiplier is scaled by the
    clamped ratio of target to actual spend fraction raised to the p gain,
    with an integral correction accumulated over past errors. Multipliers
    are capped at min(multiplier_cap, roi) so cumulative payments can never
    exceed roi times cumulative value won, and floored at gamma_min.
    """
    kappas = np.empty(state.n)
    for i, acct in enumerate(accounts):
        if acct.strategy == "pid":
            target = (state.tick + 1) / state.horizon
            actual = acct.cum_payment / acct.initial_budget if acct.initial_budget > 0 else 0.0
            if actual <= 0.0:
                ratio = 1.1
            else:
                ratio = target / actual
            adj = float(np.clip(ratio, 0.9, 1.1))
            err = adj - 1.0
            acct.pid_integral += err
            step = adj ** config.pid_p_gain * (1.0 + config.pid_i_gain * acct.pid_integral)
            acct.pacing_multiplier *= step
        cap = min(config.multiplier_cap, acct.roi)
        lo = min(config.gamma_min, cap)
        acct.pacing_multiplier = float(np.clip(acct.pacing_multiplier, lo, cap))
        kappas[i] = acct.pacing_multiplier
    return kappas[:, None] * state.values


def settle_tick(
    state: TickState,
    outcome: AuctionOutcome,
    accounts: list,
    rng: np.random.Generator,
    unit_value: float = 0.01,
) -> dict:
    """Apply one tick's outcome: charge budgets, draw events, drift quality.

    Event probabilities come from the tick's own quality matrix, which bakes
    in the quality units as of the start of the tick: a displayed impression
    converts with its conv_prob; otherwise it draws a bad-ad report with
    probability (100 - total units)/1000, clamped to [0, 0.1], where total
    units are the winner's account units plus the impression units; otherwise
    nothing happens. The uniform draws are indexed by impression, so the
    event of impression j does not depend on any other impression. Quality
    updates (+5 / -30 / +1, clamped to [0, 50]) are applied per impression
    in index order.

    Returns counts {"conversions", "reports", "none"}. Raises if a budget
    would go negative, which signals an enforcement bug upstream.
    """
    n, m = state.n, state.m
    if outcome.alloc.shape != (n, m):
        raise ValueError("outcome does not match state shape")
    spend = outcome.payments.sum(axis=1)
    for i, acct in enumerate(accounts):
        if spend[i] > acct.remaining_budget + 1e-9:
            raise ValueError(
                f"budget would go negative for {acct.advertiser_id}: "
                f"payment {spend[i]:.6f} exceeds remaining {acct.remaining_budget:.6f}"
            )
    value_won = (state.values * outcome.alloc).sum(axis=1)

    u_conv = rng.random(m)
    u_report = rng.random(m)
    counts = {"conversions": 0, "reports": 0, "none": 0}
    for j in range(m):
        w = int(outcome.winners[j])
        if w < 0:
            continue
        total_units = state.qualities[w, j] / unit_value
        if u_conv[j] < state.conv_prob[w, j]:
            delta = CONVERSION_DELTA
            counts["conversions"] += 1
        elif u_report[j] < report_probability(total_units):
            delta = REPORT_DELTA
            counts["reports"] += 1
        else:
            delta = NO_EVENT_DELTA
            counts["none"] += 1
        acct = accounts[w]
        acct.quality_units = float(np.clip(acct.quality_units + delta, 0.0, QUALITY_UNIT_MAX))
    for i, acct in enumerate(accounts):
        acct.remaining_budget -= float(spend[i])
        acct.cum_payment += float(spend[i])
        acct.cum_value_won += float(value_won[i])
    return counts


def report_probability(total_units: float) -> float:
    """Bad-ad report probability for a given total quality in units."""
    return float(np.clip((REPORT_NUMERATOR - total_units) / REPORT_SCALE, 0.0, REPORT_CAP))


class BiddingEnv:
    """Live environment handle for online training.

    Each episode re-draws impressions from per-tick child seeds while account
    state (budgets, quality, pacing) evolves with the auction outcomes, so
    the tick stream reacts to whatever boost policy is being trained.
    """

    def __init__(self, config: EpisodeConfig):
        self.config = config
        self._accounts_template = make_accounts(
            config, np.random.default_rng(np.random.SeedSequence([config.seed, 0xACC]))
        )
        self.accounts: list = []
        self._tick = 0
        self._gen_rngs: list = []
        self._settle_rngs: list = []
        self._state: TickState | None = None

    def reset(self, episode: int) -> None:
        self.accounts = [replace(a) for a in self._accounts_template]
        for a in self.accounts:
            a.reset()
        self._tick = 0
        self._state = None
        T = self.config.ticks_per_day
        gen_ss = np.random.SeedSequence([self.config.seed, episode, 0x11CE])
        set_ss = np.random.SeedSequence([self.config.seed, episode, 0x5E77])
        self._gen_rngs = [np.random.default_rng(s) for s in gen_ss.spawn(T)]
        self._settle_rngs = [np.random.default_rng(s) for s in set_ss.spawn(T)]

    @property
    def tick(self) -> int:
        return self._tick

    def done(self) -> bool:
        return self._tick >= self.config.ticks_per_day

    def tick_state(self) -> TickState:
        if self._state is None:
            self._state = generate_tick(
                self.config, self.accounts, self._gen_rngs[self._tick],
                tick=self._tick, horizon=self.config.ticks_per_day,
            )
        return self._state

    def bids(self, state: TickState) -> np.ndarray:
        return agent_bids(state, self.accounts, self.config)

    def settle(self, state: TickState, outcome: AuctionOutcome) -> dict:
        counts = settle_tick(
            state, outcome, self.accounts, self._settle_rngs[self._tick],
            unit_value=self.config.unit_value,
        )
        self._tick += 1
        self._state = None
        return counts


@dataclass
class Episode:
    """A materialized day of auctions that can be replayed under any policy.

    Ticks are recorded from a reference no-boost run, so their values and
    qualities are fixed; replaying with a different policy changes budgets
    and events but not the impression stream, which keeps the optimal
    welfare series identical across policies by construction.
    """

    config: EpisodeConfig
    accounts_init: list
    ticks: list
    seed: int

    def fresh_accounts(self) -> list:
        accounts = [replace(a) for a in self.accounts_init]
        for a in accounts:
            a.reset()
        return accounts


def generate_episode(config: EpisodeConfig, episode_seed: int) -> Episode:
    """Materialize one episode by running the environment with zero boosts."""
    from .auction import run_auction

    cfg = replace(config, seed=episode_seed)
    env = BiddingEnv(cfg)
    env.reset(0)
    accounts_init = [replace(a) for a in env.accounts]
    ticks = []
    while not env.done():
        state = env.tick_state()
        ticks.append(state)
        bids = env.bids(state)
        outcome = run_auction(state, bids, np.zeros((state.n, state.m)))
        env.settle(state, outcome)
    return Episode(config=cfg, accounts_init=accounts_init, ticks=ticks, seed=episode_seed)


ACCOUNT_COLUMNS = ["advertiser_id", "budget", "roi", "strategy", "initial_multiplier"]
TICK_COLUMNS = ["tick", "impression_id", "advertiser_id", "value", "conv_prob", "imp_quality_units"]


def _csv_fail(path, line, msg):
    raise ValueError(f"{path}:{line}: {msg}")


def load_episode_csv(accounts_path, ticks_path, config: EpisodeConfig | None = None) -> Episode:
    """Build an Episode from an accounts CSV and a per-impression ticks CSV.

    Accounts need columns advertiser_id,budget,roi,strategy,initial_multiplier
    and ticks need tick,impression_id,advertiser_id,value,conv_prob,
    imp_quality_units, both with headers, UTF-8. Every (tick, impression)
    must list each account exactly once. Quality units start at the maximum
    of 50 for every account; the money quality combines them with the row's
    impression units at a unit value of 0.01 times the file's mean value.
    Malformed or inconsistent rows raise with file and line.
    """
    accounts = []
    seen_ids = {}
    with open(accounts_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ACCOUNT_COLUMNS:
            _csv_fail(accounts_path, 1,
                      f"expected header {','.join(ACCOUNT_COLUMNS)}, got {reader.fieldnames}")
        for line, row in enumerate(reader, start=2):
            try:
                budget = float(row["budget"])
                roi = float(row["roi"])
                mult = float(row["initial_multiplier"])
            except (TypeError, ValueError):
                _csv_fail(accounts_path, line, "non-numeric budget, roi or initial_multiplier")
            strategy = (row["strategy"] or "").strip()
            if strategy not in ("fixed", "pid"):
                _csv_fail(accounts_path, line, f"unknown strategy {strategy!r}")
            if budget < 0:
                _csv_fail(accounts_path, line, f"negative budget {budget}")
            if roi <= 0:
                _csv_fail(accounts_path, line, f"roi must be positive, got {roi}")
            if mult < 0:
                _csv_fail(accounts_path, line, f"negative initial_multiplier {mult}")
            aid = row["advertiser_id"].strip()
            if aid in seen_ids:
                _csv_fail(accounts_path, line, f"duplicate advertiser_id {aid!r}")
            seen_ids[aid] = len(accounts)
            accounts.append(AdvertiserAccount(
                advertiser_id=aid, initial_budget=budget, remaining_budget=budget,
                roi=roi, strategy=strategy, pacing_multiplier=mult,
            ))
    if not accounts:
        _csv_fail(accounts_path, 2, "no account rows")

    n = len(accounts)
    # rows[tick][impression][advertiser index] = (value, conv, units)
    cells: dict = {}
    values_seen = []
    with open(ticks_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TICK_COLUMNS:
            _csv_fail(ticks_path, 1,
                      f"expected header {','.join(TICK_COLUMNS)}, got {reader.fieldnames}")
        for line, row in enumerate(reader, start=2):
            aid = row["advertiser_id"].strip()
            if aid not in seen_ids:
                _csv_fail(ticks_path, line, f"unknown advertiser_id {aid!r}")
            try:
                t = int(row["tick"])
                imp = int(row["impression_id"])
                value = float(row["value"])
                conv = float(row["conv_prob"])
                units = float(row["imp_quality_units"])
            except (TypeError, ValueError):
                _csv_fail(ticks_path, line, "non-numeric tick, impression_id, value, conv_prob or imp_quality_units")
            if value < 0:
                _csv_fail(ticks_path, line, f"negative value {value}")
            if not 0.0 <= conv <= 1.0:
                _csv_fail(ticks_path, line, f"conv_prob {conv} outside [0, 1]")
            if units < 0:
                _csv_fail(ticks_path, line, f"negative imp_quality_units {units}")
            key = (t, imp, seen_ids[aid])
            if key in cells:
                _csv_fail(ticks_path, line, f"duplicate row for tick {t}, impression {imp}, {aid!r}")
            cells[key] = (value, conv, units)
            values_seen.append(value)
    if not cells:
        _csv_fail(ticks_path, 2, "no impression rows")

    mean_value = float(np.mean(values_seen))
    unit_value = 0.01 * mean_value if mean_value > 0 else 0.01
    tick_ids = sorted({t for t, _, _ in cells})
    horizon = len(tick_ids)
    cfg = config or EpisodeConfig()
    cfg = replace(cfg, n_advertisers=n, ticks_per_day=horizon, value_mean=max(mean_value, 1e-12))

    budgets = np.array([a.remaining_budget for a in accounts])
    rois = np.array([a.roi for a in accounts])
    ticks = []
    for t_index, t in enumerate(tick_ids):
        imp_ids = sorted({imp for tt, imp, _ in cells if tt == t})
        m = len(imp_ids)
        values = np.zeros((n, m))
        conv = np.zeros((n, m))
        units = np.zeros((n, m))
        for j, imp in enumerate(imp_ids):
            for i in range(n):
                cell = cells.get((t, imp, i))
                if cell is None:
                    _csv_fail(ticks_path, 0,
                              f"tick {t} impression {imp} missing advertiser "
                              f"{accounts[i].advertiser_id!r}")
                values[i, j], conv[i, j], units[i, j] = cell
        qualities = (QUALITY_UNIT_MAX + units) * unit_value
        ticks.append(TickState(
            values=values, qualities=qualities, budgets=budgets.copy(),
            rois=rois, conv_prob=conv, tick=t_index, horizon=horizon,
        ))
    return Episode(config=cfg, accounts_init=accounts, ticks=ticks, seed=cfg.seed)
