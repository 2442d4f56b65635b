import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lendfair.model import (
    BorrowerBehavior,
    ExercisePolicy,
    LoanState,
    LoanTerms,
    MarketParams,
    StopReason,
    barrier,
    borrower_utility_fixed_term,
    exercise_price,
    fixed_term_liquidation_step,
    health_factor,
    lender_utility_fixed_term,
    loan_outcome_perpetual,
)
from lendfair.paths import PricePath, TimeGrid

MARKET = MarketParams(100.0, 0.05, 0.4)
TERMS = LoanTerms(0.1, 1.5, 1.2)
DAY = 1 / 365


@pytest.mark.parametrize("kw", [dict(s0=0, r=0.1, sigma=0.2), dict(s0=1, r=0.1, sigma=-0.1),
                                dict(s0=1, r=math.nan, sigma=0.2)])
def test_market_validation(kw):
    with pytest.raises(ValueError):
        MarketParams(**kw)


@pytest.mark.parametrize("kw", [dict(alpha=0.1, c=1.2, c0=1.5), dict(alpha=0.1, c=1.5, c0=1.0),
                                dict(alpha=-0.1, c=1.5, c0=1.2), dict(alpha=0.1, c=1.5, c0=1.2, beta=-1)])
def test_terms_validation(kw):
    with pytest.raises(ValueError):
        LoanTerms(**kw)


@pytest.mark.parametrize("kw", [dict(delta=-0.1), dict(monitor_freq=0), dict(monitor_freq=2.5),
                                dict(topup_trigger=0.0), dict(topup_size=0.0)])
def test_behavior_validation(kw):
    with pytest.raises(ValueError):
        BorrowerBehavior(**kw)


def test_policy_and_state_validation():
    with pytest.raises(ValueError):
        ExercisePolicy(-1.0)
    with pytest.raises(ValueError):
        LoanState(topup_ledger=((0.1, 0.0),))


def test_schedule_values():
    terms = LoanTerms(0.1, 1.5, 1.2, beta=0.5)
    e = exercise_price(terms, MARKET, 2.0)
    assert e == pytest.approx(math.exp(0.2) * 100 / 1.5 + 0.5)
    state = LoanState().with_topup(0.5, 0.1).with_topup(1.0, 0.1)
    assert state.total_collateral == pytest.approx(1.2)
    assert barrier(terms, MARKET, 2.0, state) == pytest.approx(1.2 * e / 1.2)
    assert health_factor(90.0, terms, MARKET, 2.0, state) == pytest.approx(90 * 1.2 / e)
    with pytest.raises(ValueError):
        exercise_price(terms, MARKET, -1)


@given(st.floats(1.0, 500.0), st.floats(0.0, 10.0), st.floats(0.0, 1.0),
       st.lists(st.floats(0.01, 1.0), max_size=5))
def test_health_below_c0_iff_below_barrier(spot, t, alpha, topups):
    terms = LoanTerms(alpha, 1.5, 1.2, 0.3)
    state = LoanState()
    for eps in topups:
        state = state.with_topup(t, eps)
    h = health_factor(spot, terms, MARKET, t, state)
    b = barrier(terms, MARKET, t, state)
    if not math.isclose(spot, b, rel_tol=1e-12):
        assert (h < terms.c0) == (spot < b)


def test_initial_health_factor_is_c():
    assert health_factor(MARKET.s0, TERMS, MARKET, 0.0) == pytest.approx(TERMS.c)


# ---------------------------------------------------------------------------
# fixed term, hand-built paths


def _path(prices, spd=1):
    grid = TimeGrid((len(prices) - 1) * DAY / spd, spd)
    return PricePath(grid, np.array(prices, dtype=float))


def test_fixed_term_survives():
    T = 2 * DAY
    p = _path([100.0, 95.0, 130.0])
    loan = 100 / 1.5
    assert fixed_term_liquidation_step(p, TERMS, MARKET, T) is None
    owed = math.exp(0.1 * T) * loan
    assert borrower_utility_fixed_term(p, TERMS, MARKET, T) == pytest.approx(loan + math.exp(-0.05 * T) * (130 - owed))
    assert lender_utility_fixed_term(p, TERMS, MARKET, T) == pytest.approx(math.exp(-0.05 * T) * owed - loan)


def test_fixed_term_liquidated_midway():
    T = 2 * DAY
    level = math.exp(0.1 * T) * 100 * 1.2 / 1.5
    p = _path([100.0, level - 0.01, 200.0])
    loan = 100 / 1.5
    assert fixed_term_liquidation_step(p, TERMS, MARKET, T) == 1
    assert borrower_utility_fixed_term(p, TERMS, MARKET, T) == pytest.approx(loan)
    assert lender_utility_fixed_term(p, TERMS, MARKET, T) == pytest.approx(math.exp(-0.05 * DAY) * level - loan)


def test_fixed_term_rejects_fee_and_off_grid_term():
    p = _path([100.0, 100.0, 100.0])
    with pytest.raises(ValueError):
        fixed_term_liquidation_step(p, LoanTerms(0.1, 1.5, 1.2, 0.5), MARKET, 2 * DAY)
    with pytest.raises(ValueError):
        fixed_term_liquidation_step(p, TERMS, MARKET, 1.5 * DAY)
    with pytest.raises(ValueError):
        fixed_term_liquidation_step(p, TERMS, MARKET, 3 * DAY)


# ---------------------------------------------------------------------------
# perpetual event loop, hand-built paths


BEH = BorrowerBehavior(delta=0.01, monitor_freq=1, topup_trigger=0.05, topup_size=0.1)
PERP = LoanTerms(0.0, 1.5, 1.2, 0.0)  # alpha 0: flat schedule, barrier 80


def test_immediate_exercise_with_zero_threshold():
    out = loan_outcome_perpetual(_path([100.0, 50.0]), PERP, MARKET, BEH, ExercisePolicy(0.0))
    assert out.stop_reason is StopReason.REPAID and out.stop_time == 0
    assert out.buyer_value == pytest.approx(100 - 100 / 1.5)
    assert out.lender_value == pytest.approx(0.0, abs=1e-12)


def test_liquidation_between_monitoring_points():
    beh = BorrowerBehavior(monitor_freq=1, topups=False)
    # 2 substeps per monitoring point; breach at an odd substep
    out = loan_outcome_perpetual(_path([100.0, 79.0, 120.0], spd=2), PERP, MARKET, beh, ExercisePolicy(1e9))
    assert out.stop_reason is StopReason.LIQUIDATED
    assert out.stop_time == pytest.approx(0.5 * DAY)
    assert out.buyer_value == 0.0
    assert out.lender_value == pytest.approx(math.exp(-0.05 * 0.5 * DAY) * 80.0 - 100 / 1.5)


def test_topup_then_exercise():
    # day 1: 82 < 1.05 * 80 triggers a top-up; day 2: 96 * 1.1 > s* = 105
    out = loan_outcome_perpetual(_path([100.0, 82.0, 96.0, 96.0]), PERP, MARKET, BEH, ExercisePolicy(105.0))
    rho = 0.06
    cost = math.exp(-rho * DAY) * 0.1 * 82
    assert out.n_topups == 1 and out.total_collateral == pytest.approx(1.1)
    assert out.stop_reason is StopReason.REPAID
    assert out.stop_time == pytest.approx(2 * DAY)
    assert out.topup_cost == pytest.approx(cost)
    assert out.buyer_value == pytest.approx(math.exp(-rho * 2 * DAY) * (1.1 * 96 - 100 / 1.5) - cost)


def test_topup_lowers_barrier_and_avoids_liquidation():
    path = _path([100.0, 82.0, 78.0, 78.0])
    without = loan_outcome_perpetual(path, PERP, MARKET, BorrowerBehavior(monitor_freq=1, topups=False),
                                     ExercisePolicy(1e9))
    with_ = loan_outcome_perpetual(path, PERP, MARKET, BEH, ExercisePolicy(1e9))
    assert without.stop_reason is StopReason.LIQUIDATED
    assert with_.stop_reason is StopReason.HORIZON_EXPIRED


def test_horizon_forces_decision():
    out = loan_outcome_perpetual(_path([100.0, 100.0, 120.0]), PERP, MARKET, BEH, ExercisePolicy(1e9))
    assert out.stop_reason is StopReason.HORIZON_EXPIRED
    assert out.buyer_value == pytest.approx(math.exp(-0.06 * 2 * DAY) * (120 - 100 / 1.5))


def test_monitor_frequency_must_divide_resolution():
    with pytest.raises(ValueError):
        loan_outcome_perpetual(_path([100.0, 100.0, 100.0], spd=3), PERP, MARKET,
                               BorrowerBehavior(monitor_freq=2), ExercisePolicy(0.0))


@given(st.lists(st.floats(60.0, 200.0), min_size=2, max_size=30), st.floats(0.0, 300.0))
def test_buyer_value_bounded_below_by_minus_topup_cost(prices, s_star):
    out = loan_outcome_perpetual(_path([100.0] + prices), PERP, MARKET, BEH, ExercisePolicy(s_star))
    assert out.buyer_value >= -out.topup_cost - 1e-12
    assert out.n_topups == round((out.total_collateral - 1) / 0.1)
