"""Lending-pool loan model: parameters, schedules, health factor and pathwise utilities.

Prices are in loan currency per unit of collateral; times are in years.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from lendfair.paths import PricePath


@dataclass(frozen=True)
class MarketParams:
    s0: float
    r: float
    sigma: float

    def __post_init__(self):
        if not self.s0 > 0:
            raise ValueError(f"s0 must be positive, got {self.s0}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if not math.isfinite(self.r):
            raise ValueError("r must be finite")


@dataclass(frozen=True)
class LoanTerms:
    alpha: float
    c: float
    c0: float
    beta: float = 0.0

    def __post_init__(self):
        if not self.c > self.c0 > 1:
            raise ValueError(f"need c > c0 > 1, got c={self.c}, c0={self.c0}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")


@dataclass(frozen=True)
class BorrowerBehavior:
    delta: float = 0.0
    monitor_freq: int = 10
    topup_trigger: float = 0.05
    topup_size: float = 0.1
    topups: bool = True

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")
        if int(self.monitor_freq) != self.monitor_freq or self.monitor_freq < 1:
            raise ValueError(f"monitor_freq must be an integer >= 1, got {self.monitor_freq}")
        if not 0 < self.topup_trigger < 1:
            raise ValueError(f"topup_trigger must lie in (0, 1), got {self.topup_trigger}")
        if not self.topup_size > 0:
            raise ValueError(f"topup_size must be positive, got {self.topup_size}")


@dataclass(frozen=True)
class LoanState:
    """Collateral position; ``total_collateral`` counts the initial unit."""

    t: float = 0.0
    topup_ledger: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not self.t >= 0:
            raise ValueError("t must be non-negative")
        if any(eps <= 0 for _, eps in self.topup_ledger):
            raise ValueError("top-up amounts must be positive")

    @property
    def total_collateral(self) -> float:
        # sequential sum, mirrored by the compiled event loop
        d = 1.0
        for _, eps in self.topup_ledger:
            d += eps
        return d

    def with_topup(self, t: float, eps: float) -> LoanState:
        return LoanState(t, self.topup_ledger + ((t, eps),))


@dataclass(frozen=True)
class ExercisePolicy:
    """Exercise when ``spot > exp(alpha t) * s_star / total_collateral`` at a monitoring point."""

    s_star: float

    def __post_init__(self):
        if not self.s_star >= 0:
            raise ValueError(f"s_star must be non-negative, got {self.s_star}")


class StopReason(enum.Enum):
    REPAID = "Repaid"
    LIQUIDATED = "Liquidated"
    HORIZON_EXPIRED = "HorizonExpired"


@dataclass(frozen=True)
class PathOutcome:
    stop_time: float
    stop_reason: StopReason
    buyer_value: float
    lender_value: float
    n_topups: int = 0
    topup_cost: float = 0.0
    total_collateral: float = 1.0


def exercise_price(terms: LoanTerms, market: MarketParams, t: float) -> float:
    """Repayment amount ``e^{alpha t} s0 / c + beta``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return math.exp(terms.alpha * t) * market.s0 / terms.c + terms.beta


def barrier(terms: LoanTerms, market: MarketParams, t: float, state: LoanState | None = None) -> float:
    """Liquidation price per unit of collateral."""
    d = 1.0 if state is None else state.total_collateral
    return terms.c0 * exercise_price(terms, market, t) / d


def health_factor(spot: float, terms: LoanTerms, market: MarketParams, t: float,
                  state: LoanState | None = None) -> float:
    if not spot > 0:
        raise ValueError("spot must be positive")
    d = 1.0 if state is None else state.total_collateral
    return spot * d / exercise_price(terms, market, t)


# ---------------------------------------------------------------------------
# fixed-term loans


def _fixed_term_window(path: PricePath, T: float) -> np.ndarray:
    grid = path.grid
    k = int(round(T / grid.dt))
    if T <= 0 or k > grid.n_steps or not math.isclose(k * grid.dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"path on [0, {grid.horizon}] does not end on a grid point at T={T}")
    return path.prices[: k + 1]


def _fixed_term_check(terms: LoanTerms) -> None:
    if terms.beta != 0:
        raise ValueError("the fixed-term loan carries no fee; beta must be 0")


def fixed_term_liquidation_step(path: PricePath, terms: LoanTerms, market: MarketParams, T: float) -> int | None:
    """First grid index where the price is below the fixed-term liquidation level, or None."""
    _fixed_term_check(terms)
    prices = _fixed_term_window(path, T)
    level = math.exp(terms.alpha * T) * market.s0 * terms.c0 / terms.c
    hits = np.flatnonzero(prices < level)
    return int(hits[0]) if hits.size else None


def borrower_utility_fixed_term(path: PricePath, terms: LoanTerms, market: MarketParams, T: float) -> float:
    loan = market.s0 / terms.c
    if fixed_term_liquidation_step(path, terms, market, T) is not None:
        return loan
    s_T = _fixed_term_window(path, T)[-1]
    return loan + math.exp(-market.r * T) * (s_T - math.exp(terms.alpha * T) * loan)


def lender_utility_fixed_term(path: PricePath, terms: LoanTerms, market: MarketParams, T: float) -> float:
    loan = market.s0 / terms.c
    hit = fixed_term_liquidation_step(path, terms, market, T)
    if hit is None:
        return math.exp(-market.r * T) * math.exp(terms.alpha * T) * loan - loan
    t = hit * path.grid.dt
    return math.exp(-market.r * t) * math.exp(terms.alpha * T) * loan * terms.c0 - loan


# ---------------------------------------------------------------------------
# perpetual loans with fee, top-ups and discrete monitoring


def oversample_factor(path: PricePath, behavior: BorrowerBehavior) -> int:
    spd = path.grid.steps_per_day
    if spd % behavior.monitor_freq:
        raise ValueError(
            f"simulation resolution {spd}/day is not a multiple of monitor_freq {behavior.monitor_freq}"
        )
    return spd // behavior.monitor_freq


def loan_outcome_perpetual(path: PricePath, terms: LoanTerms, market: MarketParams,
                           behavior: BorrowerBehavior, policy: ExercisePolicy) -> PathOutcome:
    """Play the top-up option along one path.

    Every substep checks the knockout barrier. Monitoring points (every
    ``oversample`` substeps, starting at t=0) check exercise first and the
    top-up trigger second. The last grid point is a forced decision.
    """
    if path.prices.size == 0:
        raise ValueError("empty path")
    if policy.s_star < 0:
        raise ValueError("s_star must be non-negative")
    every = oversample_factor(path, behavior)
    dt = path.grid.dt
    n = path.grid.n_steps
    rho = market.r + behavior.delta
    loan = market.s0 / terms.c
    state = LoanState()
    cost = 0.0

    def finish(k, reason, exercised):
        t = k * dt
        e_t = exercise_price(terms, market, t)
        if exercised:
            buyer = math.exp(-rho * t) * (state.total_collateral * path.prices[k] - e_t) - cost
            lender = math.exp(-market.r * t) * e_t - loan
        else:
            buyer = -cost
            lender = math.exp(-market.r * t) * terms.c0 * e_t - loan
        return PathOutcome(t, reason, buyer, lender, len(state.topup_ledger), cost, state.total_collateral)

    for k in range(n + 1):
        t = k * dt
        spot = path.prices[k]
        b_t = barrier(terms, market, t, state)
        if spot < b_t:
            return finish(k, StopReason.LIQUIDATED, False)
        if k % every == 0:
            if spot > math.exp(terms.alpha * t) * policy.s_star / state.total_collateral:
                return finish(k, StopReason.REPAID, True)
            if behavior.topups and spot < (1.0 + behavior.topup_trigger) * b_t and k < n:
                cost += math.exp(-rho * t) * behavior.topup_size * spot
                state = state.with_topup(t, behavior.topup_size)
        if k == n:
            in_money = state.total_collateral * spot > exercise_price(terms, market, t)
            return finish(k, StopReason.HORIZON_EXPIRED, in_money)
    raise AssertionError("unreachable")
