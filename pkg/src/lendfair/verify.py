"""Property suites: loan/option replication, the value floor and the parameter-sweep trends.

Loan-side utilities here are computed from loan accounting (debt, health
factor); option-side utilities come from option payoffs. Agreement between
the two is the replication property.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from lendfair.mc import SimConfig, calibrated_value, impossibility_probe, probe_setup
from lendfair.model import (
    BorrowerBehavior,
    ExercisePolicy,
    LoanState,
    LoanTerms,
    MarketParams,
    borrower_utility_fixed_term,
    health_factor,
    lender_utility_fixed_term,
    loan_outcome_perpetual,
    oversample_factor,
)
from lendfair.paths import PathBatchSpec, PricePath, TimeGrid, simulate_paths

# parameter sets used across the suites
PROBE_MARKET = MarketParams(s0=100.0, r=0.05, sigma=0.46)
PROBE_C, PROBE_C0 = 1.7, 1.2
BASE_MARKET = MarketParams(s0=100.0, r=0.03746, sigma=0.46)
BASE_TERMS = LoanTerms(alpha=0.0283, c=1 / 0.805, c0=1 / 0.83, beta=0.5)
BASE_BEHAVIOR = BorrowerBehavior(delta=0.005, monitor_freq=10)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  margin={self.margin:.6g}  {self.detail}"


# ---------------------------------------------------------------------------
# option-side payoffs


def option_value_paid(market: MarketParams, c: float) -> float:
    """Premium of the replicating option."""
    return (1.0 - 1.0 / c) * market.s0


def down_and_out_buyer_utility(prices: np.ndarray, dt: float, strike: float, barrier_level: float,
                               premium: float, s0: float, r: float) -> float:
    """Buyer sells one unit for ``s0``, pays ``premium``, exercises at expiry unless knocked out."""
    cash = s0 - premium
    if np.any(prices < barrier_level):
        return cash
    T = (prices.size - 1) * dt
    return cash + math.exp(-r * T) * max(prices[-1] - strike, 0.0)


def down_and_out_seller_utility(prices: np.ndarray, dt: float, strike: float, barrier_level: float,
                                premium: float, s0: float, r: float) -> float:
    """Seller converts the premium to the underlying, buys the rest of one unit, delivers or dumps it."""
    outlay = s0 - premium
    hit = np.flatnonzero(prices < barrier_level)
    if hit.size:
        return math.exp(-r * hit[0] * dt) * barrier_level - outlay
    T = (prices.size - 1) * dt
    return math.exp(-r * T) * strike - outlay


# ---------------------------------------------------------------------------
# loan-side perpetual accounting


@dataclass(frozen=True)
class LoanLedger:
    borrower: float
    lender: float
    repaid: bool
    stop_step: int


def perpetual_loan_ledger(path: PricePath, terms: LoanTerms, market: MarketParams,
                          behavior: BorrowerBehavior, policy: ExercisePolicy) -> LoanLedger:
    """Borrower and lender utility of the perpetual loan, from the loan's own books."""
    every = oversample_factor(path, behavior)
    dt = path.grid.dt
    n = path.grid.n_steps
    principal = market.s0 / terms.c
    borrower_cash = principal
    lender_cash = -principal
    state = LoanState()
    rho = market.r + behavior.delta
    for k in range(n + 1):
        t = k * dt
        spot = path.prices[k]
        debt = math.exp(terms.alpha * t) * principal + terms.beta
        if health_factor(spot, terms, market, t, state) < terms.c0:
            # costless sale of all collateral at the liquidation price
            lender_cash += math.exp(-market.r * t) * terms.c0 * debt
            return LoanLedger(borrower_cash, lender_cash, False, k)
        decide = k % every == 0 or k == n
        wants_out = k == n or spot * state.total_collateral > math.exp(terms.alpha * t) * policy.s_star
        if decide and wants_out and spot * state.total_collateral > debt:
            borrower_cash += math.exp(-rho * t) * (spot * state.total_collateral - debt)
            lender_cash += math.exp(-market.r * t) * debt
            return LoanLedger(borrower_cash, lender_cash, True, k)
        if k % every == 0 and k < n and behavior.topups:
            if health_factor(spot, terms, market, t, state) < terms.c0 * (1.0 + behavior.topup_trigger):
                borrower_cash -= math.exp(-rho * t) * behavior.topup_size * spot
                state = state.with_topup(t, behavior.topup_size)
    raise AssertionError("loan neither repaid nor liquidated by the horizon")


# ---------------------------------------------------------------------------
# suites


def replication_checks(n_paths: int = 1000, seed: int = 0, tol: float = 1e-9) -> list[Check]:
    checks = []

    # fixed term: constant strike and barrier over [0, T]
    market = MarketParams(100.0, 0.05, 0.6)
    terms = LoanTerms(0.03, 1.5, 1.2)
    T = 1.0
    grid = TimeGrid(T, 1)
    prices = simulate_paths(PathBatchSpec(n_paths, seed, market, grid))
    strike = math.exp(terms.alpha * T) * market.s0 / terms.c
    level = strike * terms.c0
    premium = option_value_paid(market, terms.c)
    worst_b = worst_l = 0.0
    n_hit = 0
    for row in prices:
        path = PricePath(grid, row)
        ub = borrower_utility_fixed_term(path, terms, market, T)
        ul = lender_utility_fixed_term(path, terms, market, T)
        ob = down_and_out_buyer_utility(row, grid.dt, strike, level, premium, market.s0, market.r)
        os_ = down_and_out_seller_utility(row, grid.dt, strike, level, premium, market.s0, market.r)
        worst_b = max(worst_b, abs(ub - ob))
        worst_l = max(worst_l, abs(ul - os_))
        n_hit += bool(np.any(row < level))
    checks.append(Check("replication/fixed-term/borrower", worst_b <= tol, tol - worst_b,
                        f"max|diff|={worst_b:.3g} liquidated={n_hit}/{n_paths}"))
    checks.append(Check("replication/fixed-term/lender", worst_l <= tol, tol - worst_l,
                        f"max|diff|={worst_l:.3g}"))

    # perpetual, no fee, no top-ups, monitored at every step
    perpetual = (
        "perpetual",
        MarketParams(100.0, 0.05, 0.6),
        LoanTerms(0.04, 1.7, 1.2, 0.0),
        BorrowerBehavior(delta=0.0, monitor_freq=8, topups=False),
        1,
        ExercisePolicy(125.0),
    )
    # fixed fee with top-ups, discounting and discrete monitoring
    fee_topup = ("fixed-fee-topup", BASE_MARKET, BASE_TERMS, BASE_BEHAVIOR, 2, ExercisePolicy(160.0))
    for name, mkt, trm, beh, over, policy in (perpetual, fee_topup):
        grid = TimeGrid(0.25, beh.monitor_freq * over)
        prices = simulate_paths(PathBatchSpec(n_paths, seed + 1, mkt, grid))
        premium = option_value_paid(mkt, trm.c)
        worst_b = worst_l = 0.0
        reasons = {}
        for row in prices:
            path = PricePath(grid, row)
            option = loan_outcome_perpetual(path, trm, mkt, beh, policy)
            loan = perpetual_loan_ledger(path, trm, mkt, beh, policy)
            # the buyer sold one unit for s0 and paid the premium up front
            worst_b = max(worst_b, abs(loan.borrower - (mkt.s0 - premium + option.buyer_value)))
            worst_l = max(worst_l, abs(loan.lender - option.lender_value))
            reasons[option.stop_reason.value] = reasons.get(option.stop_reason.value, 0) + 1
        mix = " ".join(f"{k}={v}" for k, v in sorted(reasons.items()))
        checks.append(Check(f"replication/{name}/borrower", worst_b <= tol, tol - worst_b,
                            f"max|diff|={worst_b:.3g} {mix}"))
        checks.append(Check(f"replication/{name}/lender", worst_l <= tol, tol - worst_l,
                            f"max|diff|={worst_l:.3g}"))
    return checks


def floor_checks(n_paths: int = 50_000, seed: int = 0,
                 alpha_grid=(0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0)) -> list[Check]:
    config = SimConfig(n_train=n_paths, n_test=n_paths, base_seed=seed)
    report = impossibility_probe(PROBE_MARKET, PROBE_C, PROBE_C0, alpha_grid, config)
    checks = []
    for row in report.rows:
        margin = row.value - (row.floor - 3 * row.std_error)
        checks.append(Check(f"floor/alpha={row.alpha:g}", row.floor_holds, margin,
                            f"value={row.value:.4f} se={row.std_error:.4f} duration={row.mean_duration:.4f} "
                            f"s_star={row.s_star:.4g} unfair_to_lender={row.unfair_to_lender}"))
    for row in report.rows:
        if row.alpha >= 1.0:
            gap = abs(row.value - row.floor)
            ok = gap <= 3 * row.std_error + 1e-9 and row.mean_duration < 0.05
            checks.append(Check(f"floor/converged/alpha={row.alpha:g}", ok, 3 * row.std_error + 1e-9 - gap,
                                f"|value-floor|={gap:.4g} duration={row.mean_duration:.4g}"))
    return checks


TREND_SPECS = (
    # parameter, low end, high end, expected sign of value(high) - value(low)
    ("r", 0.005, 0.05, +1),
    ("sigma", 0.2, 0.5, -1),
    ("delta", 0.0, 0.02, -1),
    ("monitor-freq", 1, 8, +1),
)


def trend_value(param: str, x, config: SimConfig):
    market, terms, behavior = BASE_MARKET, BASE_TERMS, BASE_BEHAVIOR
    if param == "r":
        market = dataclasses.replace(market, r=x)
    elif param == "sigma":
        market = dataclasses.replace(market, sigma=x)
    elif param == "delta":
        behavior = dataclasses.replace(behavior, delta=x)
    else:
        behavior = dataclasses.replace(behavior, monitor_freq=int(x))
    return calibrated_value(market, terms, behavior, config)


def trend_checks(n_train: int = 20_000, n_test: int = 50_000, seed: int = 0) -> list[Check]:
    config = SimConfig(n_train=n_train, n_test=n_test, base_seed=seed)
    checks = []
    for param, lo, hi, sign in TREND_SPECS:
        a = trend_value(param, lo, config)
        b = trend_value(param, hi, config)
        se = math.hypot(a.std_error, b.std_error)
        margin = sign * (b.value - a.value) - 2 * se
        checks.append(Check(f"trend/{param}", margin > 0, margin,
                            f"value({lo})={a.value:.4f}±{a.std_error:.4f} value({hi})={b.value:.4f}±{b.std_error:.4f}"))
    return checks
