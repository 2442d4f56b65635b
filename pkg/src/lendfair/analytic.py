"""Closed-form fixed-term pricing and the fixed-term fair-rate solver."""

from __future__ import annotations

import math
from dataclasses import dataclass

from lendfair.model import LoanTerms, MarketParams


class NoSolution(Exception):
    """A fair-rate search found no sign change on its bracket."""

    def __init__(self, message: str, side: str = "", diagnostics: dict | None = None):
        super().__init__(message)
        self.side = side
        self.diagnostics = diagnostics or {}


def norm_cdf(x: float) -> float:
    # erfc keeps full relative precision in the lower tail
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class FixedTermQuote:
    value: float
    eta1: float
    eta2: float
    sigma_T: float
    knocked_out_at_inception: bool
    carry: float = 0.0


def price_fixed_term(market: MarketParams, terms: LoanTerms, T: float, carry: float | None = None) -> FixedTermQuote:
    """Down-and-out call with strike ``e^{aT} s0/c`` and barrier ``c0`` times the strike.

    ``carry`` is the drift of the underlying under the pricing measure and
    defaults to ``market.r``, matching the simulated GBM. With ``carry=0`` the
    expression reduces to

        s0 e^{-rT} [N(h1) - (g/c) N(h1 - sT) - (g c0/c) N(h2) + N(h2 - sT)/c0],

    with ``g = e^{aT}``, ``h1 = ln(c/(g c0))/sT + sT/2`` and
    ``h2 = ln(g c0/c)/sT + sT/2``.
    """
    if not T > 0:
        raise ValueError(f"term must be positive, got {T}")
    if not market.sigma > 0:
        raise ValueError(f"sigma must be positive, got {market.sigma}")
    if terms.beta != 0:
        raise ValueError("the fixed-term loan carries no fee; beta must be 0")
    b = market.r if carry is None else carry
    s_T = market.sigma * math.sqrt(T)
    growth = math.exp(terms.alpha * T)
    h_over_s = growth * terms.c0 / terms.c  # barrier / spot
    x_over_s = growth / terms.c  # strike / spot
    # shift of the normal arguments due to carry
    lift = b * T / s_T
    eta1 = -math.log(h_over_s) / s_T + s_T / 2 + lift
    eta2 = math.log(h_over_s) / s_T + s_T / 2 + lift
    if h_over_s >= 1.0:
        return FixedTermQuote(0.0, eta1, eta2, s_T, True, b)
    mu = b / market.sigma**2 - 0.5
    disc = math.exp(-market.r * T)
    fwd = math.exp((b - market.r) * T)
    direct = fwd * norm_cdf(eta1) - disc * x_over_s * norm_cdf(eta1 - s_T)
    reflected = (
        fwd * h_over_s ** (2 * (mu + 1)) * norm_cdf(eta2)
        - disc * x_over_s * h_over_s ** (2 * mu) * norm_cdf(eta2 - s_T)
    )
    value = max(market.s0 * (direct - reflected), 0.0)
    return FixedTermQuote(value, eta1, eta2, s_T, False, b)


def black_scholes_call(s0: float, strike: float, r: float, sigma: float, T: float) -> float:
    s_T = sigma * math.sqrt(T)
    d1 = (math.log(s0 / strike) + r * T) / s_T + s_T / 2
    return s0 * norm_cdf(d1) - strike * math.exp(-r * T) * norm_cdf(d1 - s_T)


@dataclass(frozen=True)
class FixedTermFairRate:
    alpha: float
    residual: float
    iterations: int
    bracket: tuple[float, float]


def fixed_term_objective(market: MarketParams, c: float, c0: float, T: float, alpha: float,
                         carry: float | None = None) -> float:
    quote = price_fixed_term(market, LoanTerms(alpha, c, c0), T, carry)
    return quote.value / market.s0 - (1.0 - 1.0 / c)


def solve_fixed_term_fair_rate(market: MarketParams, c: float, c0: float, T: float,
                               alpha_max: float = 5.0, tol: float = 1e-9,
                               carry: float | None = None, max_iter: int = 200) -> FixedTermFairRate:
    """Bisection for the rate at which the option is worth ``s0 (1 - 1/c)``.

    Raises NoSolution when the objective does not change sign on ``[0, alpha_max]``.
    """
    if not c > c0 > 1:
        raise ValueError(f"need c > c0 > 1, got c={c}, c0={c0}")
    if not T > 0 or not alpha_max > 0:
        raise ValueError("T and alpha_max must be positive")

    def f(a):
        return fixed_term_objective(market, c, c0, T, a, carry)

    lo, hi = 0.0, alpha_max
    f_lo, f_hi = f(lo), f(hi)
    if f_lo < 0:
        raise NoSolution(
            "option is worth less than s0(1-1/c) even at zero interest",
            side="low", diagnostics={"alpha": lo, "objective": f_lo},
        )
    if f_hi > 0:
        raise NoSolution(
            "option is worth more than s0(1-1/c) at alpha_max",
            side="high", diagnostics={"alpha": hi, "objective": f_hi},
        )
    if f_lo <= tol:
        return FixedTermFairRate(lo, f_lo, 0, (lo, hi))
    best_a, best_f = lo, f_lo
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if abs(f_mid) < abs(best_f):
            best_a, best_f = mid, f_mid
        if abs(f_mid) <= tol:
            return FixedTermFairRate(mid, f_mid, it, (lo, hi))
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    raise NoSolution(
        "bisection stalled at the knockout jump without meeting tolerance",
        side="jump", diagnostics={"alpha": best_a, "objective": best_f, "bracket": (lo, hi)},
    )
