"""Single-slot quality-aware second-price auction.

Each impression is sold to the advertiser with the highest composite score
``bid + quality + boost``. The winner pays the second-highest composite score
minus its own quality and boost, clamped at zero, so payments never exceed
bids. Advertisers who cannot cover their would-be payment out of remaining
budget are dropped from that impression and it is re-ranked without them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TickState:
    """One tick of auction input: n advertisers facing m impressions.

    All money-valued matrices are laid out (n, m). ``qualities`` holds the
    per-pair quality term already converted to money. ``budgets`` is the
    remaining budget of each advertiser at the start of the tick.
    """

    values: np.ndarray      # commercial value v, (n, m), >= 0
    qualities: np.ndarray   # quality q in money, (n, m), >= 0
    budgets: np.ndarray     # remaining budget, (n,), >= 0
    rois: np.ndarray        # ROI limits, (n,), > 0
    conv_prob: np.ndarray   # conversion probabilities, (n, m), in [0, 1]
    tick: int = 0
    horizon: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.qualities = np.asarray(self.qualities, dtype=float)
        self.budgets = np.asarray(self.budgets, dtype=float)
        self.rois = np.asarray(self.rois, dtype=float)
        self.conv_prob = np.asarray(self.conv_prob, dtype=float)
        n, m = self.values.shape
        if self.qualities.shape != (n, m) or self.conv_prob.shape != (n, m):
            raise ValueError("values, qualities and conv_prob must share shape (n, m)")
        if self.budgets.shape != (n,) or self.rois.shape != (n,):
            raise ValueError("budgets and rois must have shape (n,)")
        if np.any(self.values < 0) or np.any(self.qualities < 0):
            raise ValueError("values and qualities must be non-negative")
        if np.any(self.budgets < 0):
            raise ValueError("budgets must be non-negative")
        if np.any((self.conv_prob < 0) | (self.conv_prob > 1)):
            raise ValueError("conv_prob entries must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass
class AuctionOutcome:
    """Result of one tick: who won what and at what price."""

    alloc: np.ndarray          # 0/1 matrix, (n, m), column sums <= 1
    payments: np.ndarray       # money matrix, (n, m), nonzero only where alloc is 1
    winners: np.ndarray        # winner index per impression, (m,), -1 when unsold
    second_scores: np.ndarray  # second-highest composite per impression, (m,)


@dataclass
class WelfareBreakdown:
    liquid: float
    quality: float
    total: float
    revenue: float


def run_auction(state: TickState, bids: np.ndarray, boosts: np.ndarray) -> AuctionOutcome:
    """Run the composite-score auction over every impression of a tick.

    Args:
        state: tick input, shapes (n, m).
        bids: bid matrix, (n, m), must be non-negative.
        boosts: boost matrix z, (n, m). May be negative (some baseline
            policies subtract from scores); only bids are sign-checked.

    Returns:
        AuctionOutcome with allocation, payments, winners and second scores.

    The winner of impression j is argmax_i of ``bids + qualities + boosts``
    with ties broken toward the lowest advertiser index. Its payment is
    ``max(0, second_score - quality - boost)``; with a single active bidder
    the second score is 0. Impressions are settled in index order against a
    running within-tick budget, and any advertiser whose remaining budget
    cannot cover its would-be payment is removed from that impression before
    the ranking is final.
    """
    bids = np.asarray(bids, dtype=float)
    boosts = np.asarray(boosts, dtype=float)
    n, m = state.n, state.m
    if bids.shape != (n, m) or boosts.shape != (n, m):
        raise ValueError("bids and boosts must have shape (n, m)")
    if np.any(bids < 0):
        raise ValueError("bids must be non-negative")

    scores = bids + state.qualities + boosts

    # Fast path: rank ignoring budgets, then verify every advertiser can pay
    # its full tick bill. Payments are non-negative, so if the totals fit the
    # sequential settlement below would never have excluded anyone.
    winners = np.argmax(scores, axis=0)
    if n >= 2:
        second = np.partition(scores, n - 2, axis=0)[n - 2, :]
    else:
        second = np.zeros(m)
    cols = np.arange(m)
    pays = np.maximum(
        0.0, second - state.qualities[winners, cols] - boosts[winners, cols]
    )
    totals = np.zeros(n)
    np.add.at(totals, winners, pays)
    if np.all(totals <= state.budgets + 1e-12):
        alloc = np.zeros((n, m))
        payments = np.zeros((n, m))
        alloc[winners, cols] = 1.0
        payments[winners, cols] = pays
        return AuctionOutcome(alloc, payments, winners.astype(np.int64), second)

    # Slow path: impressions in order, tracking remaining budget and
    # excluding advertisers who cannot afford their would-be payment.
    alloc = np.zeros((n, m))
    payments = np.zeros((n, m))
    winners = np.full(m, -1, dtype=np.int64)
    second_scores = np.zeros(m)
    remaining = state.budgets.copy()
    for j in range(m):
        active = list(range(n))
        while active:
            col = scores[active, j]
            k = int(np.argmax(col))
            w = active[k]
            if len(active) >= 2:
                sec = float(np.partition(col, len(active) - 2)[len(active) - 2])
            else:
                sec = 0.0
            pay = max(0.0, sec - state.qualities[w, j] - boosts[w, j])
            if pay <= remaining[w] + 1e-12:
                winners[j] = w
                second_scores[j] = sec
                alloc[w, j] = 1.0
                payments[w, j] = pay
                remaining[w] -= pay
                break
            active.pop(k)
    return AuctionOutcome(alloc, payments, winners, second_scores)


def welfare(state: TickState, outcome: AuctionOutcome) -> WelfareBreakdown:
    """Liquid welfare plus quality welfare, and revenue, for one tick.

    Liquid welfare caps each advertiser's realized value at its budget as of
    the start of the tick: sum_i min(B_i, sum_j v_ij x_ij).
    """
    value_won = (state.values * outcome.alloc).sum(axis=1)
    liquid = float(np.minimum(state.budgets, value_won).sum())
    quality = float((state.qualities * outcome.alloc).sum())
    revenue = float(outcome.payments.sum())
    return WelfareBreakdown(liquid, quality, liquid + quality, revenue)


def min_bid_ratio(bids: np.ndarray, values: np.ndarray) -> float:
    """Minimum bidding level gamma: min of bid/value over pairs with value > 0."""
    bids = np.asarray(bids, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = values > 0
    if not np.any(mask):
        raise ValueError("gamma undefined: all values are zero")
    return float((bids[mask] / values[mask]).min())


def optimal_welfare(state: TickState) -> float:
    """Welfare of the assignment maximizing value plus quality, budgets ignored."""
    return float((state.values + state.qualities).max(axis=0).sum())
