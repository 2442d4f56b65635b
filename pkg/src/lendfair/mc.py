"""Monte Carlo valuation of the perpetual top-up option and fair-rate search.

The buyer exercises at the first monitoring point where
``spot > e^{alpha t} s_star / D``. The threshold constant ``s_star`` is picked
by a grid search on training paths and then valued on disjoint test paths.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from lendfair import rng
from lendfair.analytic import NoSolution
from lendfair.model import (
    BorrowerBehavior,
    ExercisePolicy,
    LoanTerms,
    MarketParams,
    StopReason,
    exercise_price,
)
from lendfair.paths import TimeGrid, step_coefficients

TEST_INDEX_OFFSET = 2**40

REASON_CODES = {0: StopReason.REPAID, 1: StopReason.LIQUIDATED, 2: StopReason.HORIZON_EXPIRED}


@dataclass(frozen=True)
class SimConfig:
    n_train: int = 40_000
    n_test: int = 200_000
    horizon: float = 5.0
    oversample: int = 4
    s_star_grid: tuple[float, ...] | None = None
    base_seed: int = 0

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be >= 1")
        if self.n_train > TEST_INDEX_OFFSET:
            raise ValueError("training paths would overlap the test index range")
        if int(self.oversample) != self.oversample or self.oversample < 1:
            raise ValueError("oversample must be an integer >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.s_star_grid is not None:
            g = np.asarray(self.s_star_grid, dtype=float)
            if g.size == 0:
                raise ValueError("s_star_grid is empty")
            if np.any(g < 0) or np.any(np.diff(g) <= 0):
                raise ValueError("s_star_grid must be non-negative and strictly increasing")

    @property
    def train_indices(self) -> np.ndarray:
        return np.arange(self.n_train, dtype=np.uint64)

    @property
    def test_indices(self) -> np.ndarray:
        return np.arange(TEST_INDEX_OFFSET, TEST_INDEX_OFFSET + self.n_test, dtype=np.uint64)

    def grid_for(self, behavior: BorrowerBehavior) -> TimeGrid:
        return TimeGrid(self.horizon, behavior.monitor_freq * self.oversample)


@dataclass(frozen=True)
class ValuationResult:
    value: float
    std_error: float
    mean_duration: float
    liquidation_rate: float
    mean_topups: float
    policy: ExercisePolicy
    n_paths: int = 0
    lender_value: float = float("nan")


def default_s_star_grid(market: MarketParams, terms: LoanTerms, n_points: int = 60) -> np.ndarray:
    """Zero plus ``n_points`` geometric points from the initial exercise price to ``6 s0``."""
    lo = exercise_price(terms, market, 0.0)
    return np.concatenate(([0.0], np.geomspace(lo, 6.0 * market.s0, n_points)))


def _grid(config: SimConfig, market: MarketParams, terms: LoanTerms) -> np.ndarray:
    if config.s_star_grid is None:
        return default_s_star_grid(market, terms)
    return np.asarray(config.s_star_grid, dtype=float)


# ---------------------------------------------------------------------------
# compiled kernels; per-path results only, reductions happen in numpy


@numba.njit(cache=True)
def _schedule(n_steps, dt, alpha, rho):
    growth = np.empty(n_steps + 1)
    disc = np.empty(n_steps + 1)
    for k in range(n_steps + 1):
        t = k * dt
        growth[k] = math.exp(alpha * t)
        disc[k] = math.exp(-rho * t)
    return growth, disc


@numba.njit(cache=True, parallel=True)
def _play_kernel(seed, indices, n_steps, every, dt, s0, drift, vol,
                 alpha, c, c0, beta, r, rho, trig, size, topups, s_star):
    n = indices.shape[0]
    buyer = np.empty(n)
    lender = np.empty(n)
    stop = np.empty(n)
    reason = np.empty(n, dtype=np.int8)
    ntop = np.empty(n, dtype=np.int64)
    cost_out = np.empty(n)
    loan = s0 / c
    growth_k, disc_k = _schedule(n_steps, dt, alpha, rho)
    for p in numba.prange(n):
        idx = indices[p]
        s = s0
        d = 1.0
        cost = 0.0
        tops = 0
        z = (0.0, 0.0, 0.0, 0.0)
        for k in range(n_steps + 1):
            if k > 0:
                j = k - 1
                if j % 4 == 0:
                    z = rng.normal_block(seed, idx, j // 4, rng.STREAM_PRICE)
                s = s * math.exp(drift + vol * z[j % 4])
            t = k * dt
            growth = growth_k[k]
            e_t = growth * s0 / c + beta
            b_t = c0 * e_t / d
            code = -1
            if s < b_t:
                code = 1
            elif k % every == 0:
                if s > growth * s_star / d:
                    code = 0
                elif topups and s < (1.0 + trig) * b_t and k < n_steps:
                    cost += disc_k[k] * size * s
                    d += size
                    tops += 1
            if code < 0 and k == n_steps:
                code = 2 if d * s > e_t else 3
            if code >= 0:
                if code == 0 or code == 2:
                    buyer[p] = disc_k[k] * (d * s - e_t) - cost
                    lender[p] = math.exp(-r * t) * e_t - loan
                else:
                    buyer[p] = -cost
                    lender[p] = math.exp(-r * t) * c0 * e_t - loan
                    if code == 3:
                        code = 2
                stop[p] = t
                reason[p] = code
                ntop[p] = tops
                cost_out[p] = cost
                break
    return buyer, lender, stop, reason, ntop, cost_out


@numba.njit(cache=True, parallel=True)
def _calibrate_kernel(seed, indices, n_steps, every, dt, s0, drift, vol,
                      alpha, c, beta, c0, rho, trig, size, topups, grid):
    """Buyer value for every threshold in ``grid`` (ascending) on each path.

    Top-ups do not depend on the threshold, so one pass per path serves all
    candidates: the candidates that fire at a monitoring point are always the
    untriggered ones with the smallest thresholds.
    """
    n = indices.shape[0]
    m = grid.shape[0]
    out = np.empty((n, m))
    growth_k, disc_k = _schedule(n_steps, dt, alpha, rho)
    for p in numba.prange(n):
        idx = indices[p]
        s = s0
        d = 1.0
        cost = 0.0
        nxt = 0
        z = (0.0, 0.0, 0.0, 0.0)
        for k in range(n_steps + 1):
            if k > 0:
                j = k - 1
                if j % 4 == 0:
                    z = rng.normal_block(seed, idx, j // 4, rng.STREAM_PRICE)
                s = s * math.exp(drift + vol * z[j % 4])
            t = k * dt
            growth = growth_k[k]
            e_t = growth * s0 / c + beta
            b_t = c0 * e_t / d
            if s < b_t:
                for q in range(nxt, m):
                    out[p, q] = -cost
                nxt = m
                break
            if k % every == 0:
                if s > growth * grid[nxt] / d:
                    payoff = disc_k[k] * (d * s - e_t) - cost
                    while nxt < m and s > growth * grid[nxt] / d:
                        out[p, nxt] = payoff
                        nxt += 1
                if nxt == m:
                    break
                if topups and s < (1.0 + trig) * b_t and k < n_steps:
                    cost += disc_k[k] * size * s
                    d += size
            if k == n_steps:
                final = disc_k[k] * (d * s - e_t) - cost if d * s > e_t else -cost
                for q in range(nxt, m):
                    out[p, q] = final
                nxt = m
    return out


@numba.njit(cache=True, parallel=True)
def _fixed_term_bridge_kernel(seed, indices, n_steps, dt, s0, drift, vol, sigma, barrier_level, strike, disc):
    n = indices.shape[0]
    out = np.empty(n)
    var = sigma * sigma * dt
    for p in numba.prange(n):
        idx = indices[p]
        s = s0
        w = 1.0 if s0 > barrier_level else 0.0
        z = (0.0, 0.0, 0.0, 0.0)
        for k in range(n_steps):
            if w == 0.0:
                break
            if k % 4 == 0:
                z = rng.normal_block(seed, idx, k // 4, rng.STREAM_PRICE)
            s_next = s * math.exp(drift + vol * z[k % 4])
            if s_next <= barrier_level:
                w = 0.0
            else:
                w *= 1.0 - math.exp(-2.0 * math.log(s / barrier_level) * math.log(s_next / barrier_level) / var)
            s = s_next
        out[p] = disc * w * max(s - strike, 0.0) if w > 0.0 else 0.0
    return out


def _seed(config_or_seed) -> np.uint64:
    seed = config_or_seed.base_seed if isinstance(config_or_seed, SimConfig) else config_or_seed
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


def _common_args(market, terms, behavior, config):
    grid = config.grid_for(behavior)
    drift, vol = step_coefficients(market, grid.dt)
    return grid, drift, vol


def play_paths(market: MarketParams, terms: LoanTerms, behavior: BorrowerBehavior,
               policy: ExercisePolicy, config: SimConfig, indices: np.ndarray) -> dict[str, np.ndarray]:
    """Per-path outcomes of the exercise policy on the given path indices."""
    if policy.s_star < 0:
        raise ValueError("s_star must be non-negative")
    grid, drift, vol = _common_args(market, terms, behavior, config)
    buyer, lender, stop, reason, ntop, cost = _play_kernel(
        _seed(config), np.ascontiguousarray(indices, dtype=np.uint64), grid.n_steps,
        config.oversample, grid.dt, float(market.s0), drift, vol,
        float(terms.alpha), float(terms.c), float(terms.c0), float(terms.beta),
        float(market.r), float(market.r + behavior.delta),
        float(behavior.topup_trigger), float(behavior.topup_size), bool(behavior.topups),
        float(policy.s_star),
    )
    return {"buyer": buyer, "lender": lender, "stop_time": stop, "reason": reason,
            "n_topups": ntop, "topup_cost": cost}


def candidate_values(market: MarketParams, terms: LoanTerms, behavior: BorrowerBehavior,
                     config: SimConfig, grid_values=None, indices=None) -> np.ndarray:
    """Matrix of per-path buyer values, one column per threshold candidate."""
    grid_values = _grid(config, market, terms) if grid_values is None else np.asarray(grid_values, float)
    indices = config.train_indices if indices is None else indices
    if grid_values.size == 0:
        raise ValueError("empty s_star grid")
    grid, drift, vol = _common_args(market, terms, behavior, config)
    return _calibrate_kernel(
        _seed(config), np.ascontiguousarray(indices, dtype=np.uint64), grid.n_steps,
        config.oversample, grid.dt, float(market.s0), drift, vol,
        float(terms.alpha), float(terms.c), float(terms.beta), float(terms.c0),
        float(market.r + behavior.delta),
        float(behavior.topup_trigger), float(behavior.topup_size), bool(behavior.topups),
        np.ascontiguousarray(grid_values),
    )


def calibrate_threshold(market: MarketParams, terms: LoanTerms, behavior: BorrowerBehavior,
                        config: SimConfig) -> ExercisePolicy:
    """Best threshold on the training paths; ties go to the smaller threshold."""
    grid_values = _grid(config, market, terms)
    means = candidate_values(market, terms, behavior, config, grid_values).mean(axis=0)
    return ExercisePolicy(float(grid_values[int(np.argmax(means))]))


def value_option(market: MarketParams, terms: LoanTerms, behavior: BorrowerBehavior,
                 policy: ExercisePolicy, config: SimConfig) -> ValuationResult:
    out = play_paths(market, terms, behavior, policy, config, config.test_indices)
    buyer = out["buyer"]
    n = buyer.size
    se = float(buyer.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return ValuationResult(
        value=float(buyer.mean()),
        std_error=se,
        mean_duration=float(out["stop_time"].mean()),
        liquidation_rate=float(np.mean(out["reason"] == 1)),
        mean_topups=float(out["n_topups"].mean()),
        policy=policy,
        n_paths=n,
        lender_value=float(out["lender"].mean()),
    )


def calibrated_value(market, terms, behavior, config) -> ValuationResult:
    return value_option(market, terms, behavior, calibrate_threshold(market, terms, behavior, config), config)


# ---------------------------------------------------------------------------
# fair rate


@dataclass(frozen=True)
class FairRateResult:
    alpha: float
    valuation: ValuationResult
    target: float
    iterations: int
    degenerate: bool = False
    history: tuple = ()

    @property
    def relative_error(self) -> float:
        return abs(self.valuation.value - self.target) / self.target


def solve_fair_rate(market: MarketParams, c: float, c0: float, beta: float, behavior: BorrowerBehavior,
                    config: SimConfig, tol_rel: float = 0.005, bracket: tuple[float, float] = (0.0, 2.0),
                    max_iter: int = 14) -> FairRateResult:
    """Bisection on alpha until the calibrated value is within ``tol_rel`` of ``s0 (1 - 1/c)``.

    Each candidate rate is re-calibrated on the training paths and valued on
    the (fixed) test paths. Raises NoSolution on bracket failure or when the
    iteration budget runs out.
    """
    if not c > c0 > 1:
        raise ValueError(f"need c > c0 > 1, got c={c}, c0={c0}")
    target = market.s0 * (1.0 - 1.0 / c)
    tol = tol_rel * target
    history = []

    def evaluate(a):
        res = calibrated_value(market, LoanTerms(a, c, c0, beta), behavior, config)
        history.append((a, res.value, res.std_error, res.mean_duration))
        return res

    # with no fee the value floor equals the target: only immediate exercise is fair
    degenerate = beta == 0
    lo, hi = bracket
    res_lo = evaluate(lo)
    if abs(res_lo.value - target) <= tol:
        return FairRateResult(lo, res_lo, target, 0, degenerate, tuple(history))
    if res_lo.value < target:
        raise NoSolution("value at the lower rate is already below s0(1-1/c)", side="low",
                         diagnostics={"alpha": lo, "value": res_lo.value, "target": target})
    res_hi = evaluate(hi)
    if res_hi.value > target + tol:
        raise NoSolution("value never falls to s0(1-1/c) within the bracket", side="high",
                         diagnostics={"alpha": hi, "value": res_hi.value, "target": target})
    best = (abs(res_hi.value - target), hi, res_hi)
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        res = evaluate(mid)
        gap = res.value - target
        if abs(gap) < best[0]:
            best = (abs(gap), mid, res)
        if abs(gap) <= tol:
            return FairRateResult(mid, res, target, it, degenerate, tuple(history))
        if gap > 0:
            lo = mid
        else:
            hi = mid
    if best[0] <= tol:
        return FairRateResult(best[1], best[2], target, max_iter, degenerate, tuple(history))
    raise NoSolution("bisection budget exhausted before reaching tolerance", side="unconverged",
                     diagnostics={"alpha": best[1], "value": best[2].value, "target": target,
                                  "bracket": (lo, hi)})


# ---------------------------------------------------------------------------
# impossibility probe


@dataclass(frozen=True)
class ProbeRow:
    alpha: float
    value: float
    std_error: float
    mean_duration: float
    s_star: float
    floor: float

    @property
    def floor_holds(self) -> bool:
        return self.value >= self.floor - 3 * self.std_error

    @property
    def unfair_to_lender(self) -> bool:
        return self.value > self.floor + 3 * self.std_error and self.mean_duration > 0


@dataclass(frozen=True)
class ProbeReport:
    rows: tuple[ProbeRow, ...]

    @property
    def floor_holds(self) -> bool:
        return all(r.floor_holds for r in self.rows)

    @property
    def unfair_alphas(self) -> list[float]:
        return [r.alpha for r in self.rows if r.unfair_to_lender]


PROBE_MIN_STEPS_PER_DAY = 8


def probe_setup(config: SimConfig) -> tuple[BorrowerBehavior, SimConfig]:
    """Dense-monitoring proxy: act at every substep, no fee, no discounting, no top-ups."""
    steps = max(PROBE_MIN_STEPS_PER_DAY, config.oversample)
    behavior = BorrowerBehavior(delta=0.0, monitor_freq=steps, topups=False)
    return behavior, dataclasses.replace(config, oversample=1)


def impossibility_probe(market: MarketParams, c: float, c0: float, alpha_grid, config: SimConfig) -> ProbeReport:
    behavior, cfg = probe_setup(config)
    floor = market.s0 * (1.0 - 1.0 / c)
    rows = []
    for a in alpha_grid:
        res = calibrated_value(market, LoanTerms(float(a), c, c0, 0.0), behavior, cfg)
        rows.append(ProbeRow(float(a), res.value, res.std_error, res.mean_duration, res.policy.s_star, floor))
    return ProbeReport(tuple(rows))


# ---------------------------------------------------------------------------
# sweeps

SWEEP_PARAMS = ("alpha", "r", "sigma", "delta", "monitor-freq")


@dataclass(frozen=True)
class SweepRow:
    parameter_name: str
    parameter_value: float
    alpha: float
    result: ValuationResult


def sweep(param: str, values, market: MarketParams, terms: LoanTerms, behavior: BorrowerBehavior,
          config: SimConfig) -> list[SweepRow]:
    """Calibrated value at each grid point; all points share the same paths."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    rows = []
    for v in values:
        m, t, b = market, terms, behavior
        if param == "alpha":
            t = dataclasses.replace(terms, alpha=float(v))
        elif param == "r":
            m = dataclasses.replace(market, r=float(v))
        elif param == "sigma":
            m = dataclasses.replace(market, sigma=float(v))
        elif param == "delta":
            b = dataclasses.replace(behavior, delta=float(v))
        else:
            if float(v) != int(round(float(v))):
                raise ValueError(f"monitor frequency must be an integer, got {v}")
            b = dataclasses.replace(behavior, monitor_freq=int(round(float(v))))
        rows.append(SweepRow(param, float(v), t.alpha, calibrated_value(m, t, b, config)))
    return rows


# ---------------------------------------------------------------------------
# fixed-term oracle


def price_fixed_term_mc(market: MarketParams, terms: LoanTerms, T: float, n_paths: int = 500_000,
                        seed: int = 0, steps_per_day: int = 1) -> tuple[float, float]:
    """Bridge-corrected Monte Carlo price of the fixed-term down-and-out call: (mean, standard error)."""
    grid = TimeGrid(T, steps_per_day)
    drift, vol = step_coefficients(market, grid.dt)
    growth = math.exp(terms.alpha * T)
    payoff = _fixed_term_bridge_kernel(
        _seed(seed), np.arange(n_paths, dtype=np.uint64), grid.n_steps, grid.dt,
        float(market.s0), drift, vol, float(market.sigma),
        growth * market.s0 * terms.c0 / terms.c, growth * market.s0 / terms.c,
        math.exp(-market.r * T),
    )
    return float(payoff.mean()), float(payoff.std(ddof=1) / math.sqrt(n_paths))
