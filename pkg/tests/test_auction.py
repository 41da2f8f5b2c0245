"""Auction mechanics against hand-worked outcomes and a brute-force oracle."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qboost import TickState, min_bid_ratio, optimal_welfare, run_auction, welfare

BIG = 1e9


def make_state(values, qualities, budgets=None, conv=None):
    values = np.asarray(values, dtype=float)
    n, m = values.shape
    qualities = np.asarray(qualities, dtype=float)
    budgets = np.full(n, BIG) if budgets is None else np.asarray(budgets, dtype=float)
    conv = np.zeros((n, m)) if conv is None else np.asarray(conv, dtype=float)
    return TickState(values, qualities, budgets, np.ones(n), conv)


def _reference_auction(state, bids, boosts):
    """Per-impression sequential settlement, written independently."""
    scores = bids + state.qualities + boosts
    n, m = state.n, state.m
    winners = np.full(m, -1, dtype=np.int64)
    payments = np.zeros((n, m))
    alloc = np.zeros((n, m))
    remaining = state.budgets.astype(float).copy()
    for j in range(m):
        active = list(range(n))
        while active:
            w = max(active, key=lambda i: (scores[i, j], -i))
            others = [scores[i, j] for i in active if i != w]
            sec = max(others) if others else 0.0
            pay = max(0.0, sec - state.qualities[w, j] - boosts[w, j])
            if pay <= remaining[w] + 1e-12:
                winners[j] = w
                alloc[w, j] = 1.0
                payments[w, j] = pay
                remaining[w] -= pay
                break
            active.remove(w)
    return winners, alloc, payments


def _brute_best_welfare(state):
    """Max welfare over every full assignment, budget caps included."""
    n, m = state.n, state.m
    best = -np.inf
    for assign in itertools.product(range(n), repeat=m):
        value_won = np.zeros(n)
        quality = 0.0
        for j, i in enumerate(assign):
            value_won[i] += state.values[i, j]
            quality += state.qualities[i, j]
        best = max(best, float(np.minimum(state.budgets, value_won).sum()) + quality)
    return best


def test_quality_win_pays_zero():
    # low bid wins on quality and the clamp kills the payment
    state = make_state([[1.0], [5.0]], [[10.0], [0.0]])
    out = run_auction(state, np.array([[1.0], [5.0]]), np.zeros((2, 1)))
    assert out.winners.tolist() == [0]
    assert out.payments[0, 0] == 0.0
    assert out.second_scores[0] == 5.0


def test_plain_second_price():
    state = make_state([[3.0], [1.0]], [[0.0], [0.0]])
    out = run_auction(state, np.array([[3.0], [1.0]]), np.zeros((2, 1)))
    assert out.winners.tolist() == [0]
    assert out.payments[0, 0] == 1.0


def test_boost_flips_winner():
    state = make_state([[3.0], [1.0]], [[0.0], [0.0]])
    z = np.array([[0.0], [3.0]])
    out = run_auction(state, np.array([[3.0], [1.0]]), z)
    assert out.winners.tolist() == [1]
    assert out.payments[1, 0] == pytest.approx(0.0)  # 3 - 0 - 3


def test_single_bidder_pays_zero():
    state = make_state([[2.0]], [[1.0]])
    out = run_auction(state, np.array([[4.0]]), np.zeros((1, 1)))
    assert out.winners.tolist() == [0]
    assert out.second_scores[0] == 0.0
    assert out.payments[0, 0] == 0.0


def test_tie_breaks_to_lowest_index():
    state = make_state([[2.0], [2.0], [2.0]], np.zeros((3, 1)))
    out = run_auction(state, np.full((3, 1), 2.0), np.zeros((3, 1)))
    assert out.winners.tolist() == [0]


def test_budget_exclusion_reranks():
    # winner-by-score cannot pay and is dropped from the impression
    state = make_state([[5.0], [3.0]], np.zeros((2, 1)), budgets=[0.0, 10.0])
    out = run_auction(state, np.array([[5.0], [3.0]]), np.zeros((2, 1)))
    assert out.winners.tolist() == [1]
    assert out.payments[1, 0] == 0.0  # only active bidder left, second score 0


def test_within_tick_budget_is_sequential():
    # adv0 can afford the first payment but not the second
    values = np.array([[5.0, 5.0], [3.0, 3.0]])
    state = make_state(values, np.zeros((2, 2)), budgets=[4.0, 100.0])
    out = run_auction(state, values, np.zeros((2, 2)))
    assert out.winners.tolist() == [0, 1]
    assert out.payments[0, 0] == 3.0
    assert out.payments[1, 1] == 0.0


def test_unsold_when_nobody_can_pay():
    # negative boost creates a positive payment the lone bidder cannot cover
    state = make_state([[1.0]], np.zeros((1, 1)), budgets=[0.0])
    out = run_auction(state, np.array([[1.0]]), np.array([[-5.0]]))
    assert out.winners.tolist() == [-1]
    assert out.alloc.sum() == 0.0
    assert out.payments.sum() == 0.0


def test_input_validation():
    state = make_state([[1.0]], [[0.0]])
    with pytest.raises(ValueError):
        run_auction(state, np.array([[-1.0]]), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        run_auction(state, np.zeros((2, 1)), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        TickState(np.ones((2, 1)), np.ones((2, 1)), np.ones(2), np.ones(2),
                  np.full((2, 1), 1.5))
    with pytest.raises(ValueError):
        TickState(-np.ones((2, 1)), np.ones((2, 1)), np.ones(2), np.ones(2),
                  np.zeros((2, 1)))


def test_welfare_breakdown_hand_case():
    values = np.array([[4.0, 4.0], [1.0, 1.0]])
    qualities = np.array([[0.5, 0.5], [0.0, 0.0]])
    state = make_state(values, qualities, budgets=[5.0, BIG])
    out = run_auction(state, values, np.zeros((2, 2)))
    w = welfare(state, out)
    # adv0 wins both: value won 8 capped at budget 5, quality 1;
    # each payment is the second score 1 minus the winner's quality 0.5
    assert out.winners.tolist() == [0, 0]
    assert w.liquid == 5.0
    assert w.quality == 1.0
    assert w.total == 6.0
    assert w.revenue == 1.0


def test_min_bid_ratio():
    bids = np.array([[0.5, 2.0], [1.0, 0.0]])
    values = np.array([[1.0, 2.0], [2.0, 0.0]])
    assert min_bid_ratio(bids, values) == 0.5
    with pytest.raises(ValueError, match="gamma undefined"):
        min_bid_ratio(np.ones((1, 1)), np.zeros((1, 1)))


def test_optimal_welfare_matches_enumeration():
    rng = np.random.default_rng(42)
    for _ in range(20):
        n, m = rng.integers(1, 5), rng.integers(1, 5)
        state = make_state(rng.uniform(0, 3, (n, m)), rng.uniform(0, 2, (n, m)))
        brute = max(
            sum((state.values + state.qualities)[i, j] for j, i in enumerate(assign))
            for assign in itertools.product(range(n), repeat=m)
        )
        assert optimal_welfare(state) == pytest.approx(brute)


def test_auction_welfare_never_beats_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(30):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        state = make_state(
            rng.uniform(0, 3, (n, m)),
            rng.uniform(0, 2, (n, m)),
            budgets=rng.uniform(0.5, 6.0, n),
        )
        bids = rng.uniform(0, 3, (n, m))
        boosts = rng.uniform(0, 2, (n, m))
        out = run_auction(state, bids, boosts)
        w = welfare(state, out)
        assert w.total <= _brute_best_welfare(state) + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.booleans())
def test_matches_reference_settlement(seed, tight_budgets):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    state = make_state(
        rng.uniform(0, 3, (n, m)),
        rng.uniform(0, 2, (n, m)),
        budgets=rng.uniform(0, 2.0 if tight_budgets else BIG, n),
    )
    bids = rng.uniform(0, 3, (n, m))
    boosts = rng.normal(0, 1, (n, m))
    out = run_auction(state, bids, boosts)
    winners, alloc, payments = _reference_auction(state, bids, boosts)
    assert np.array_equal(out.winners, winners)
    assert np.array_equal(out.alloc, alloc)
    assert np.allclose(out.payments, payments, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_payment_properties(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    state = make_state(rng.uniform(0, 3, (n, m)), rng.uniform(0, 2, (n, m)))
    bids = rng.uniform(0, 3, (n, m))
    boosts = rng.uniform(0, 2, (n, m))
    out = run_auction(state, bids, boosts)
    assert np.all(out.alloc.sum(axis=0) <= 1)
    assert np.all(out.payments >= 0)
    assert np.all(out.payments[out.alloc == 0] == 0)
    # individual rationality: the winner never pays more than its bid
    for j, w in enumerate(out.winners):
        if w >= 0:
            assert out.payments[w, j] <= bids[w, j] + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_column_shift_of_boosts_is_neutral(seed):
    # adding a per-impression constant to every boost changes nothing
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 6)), int(rng.integers(1, 5))
    state = make_state(rng.uniform(0, 3, (n, m)), rng.uniform(0, 2, (n, m)))
    bids = rng.uniform(0, 3, (n, m))
    boosts = rng.uniform(0, 2, (n, m))
    shift = rng.normal(0, 2, (1, m))
    a = run_auction(state, bids, boosts)
    b = run_auction(state, bids, boosts + shift)
    assert np.array_equal(a.winners, b.winners)
    assert np.allclose(a.payments, b.payments, atol=1e-9)


def test_deterministic_outcome():
    rng = np.random.default_rng(3)
    state = make_state(rng.uniform(0, 3, (4, 5)), rng.uniform(0, 2, (4, 5)))
    bids = rng.uniform(0, 3, (4, 5))
    boosts = rng.uniform(0, 1, (4, 5))
    a = run_auction(state, bids, boosts)
    b = run_auction(state, bids, boosts)
    assert np.array_equal(a.winners, b.winners)
    assert np.array_equal(a.payments, b.payments)
