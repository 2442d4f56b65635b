"""Discretised GBM price paths and the Brownian-bridge knockout probability."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from lendfair import rng

DAYS_PER_YEAR = 365


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps_per_day: int = 1

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.steps_per_day) != self.steps_per_day or self.steps_per_day < 1:
            raise ValueError(f"steps_per_day must be an integer >= 1, got {self.steps_per_day}")
        if self.n_steps < 1:
            raise ValueError("grid has no steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon * DAYS_PER_YEAR * self.steps_per_day))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class PricePath:
    grid: TimeGrid
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if prices.ndim != 1 or prices.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"expected {self.grid.n_steps + 1} prices, got shape {prices.shape}"
            )
        if not np.all(prices > 0):
            raise ValueError("prices must be strictly positive")
        object.__setattr__(self, "prices", prices)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times()


@dataclass(frozen=True)
class PathBatchSpec:
    n_paths: int
    base_seed: int
    market: "MarketParams"
    grid: TimeGrid
    first_index: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")

    @property
    def path_indices(self) -> np.ndarray:
        return np.arange(self.first_index, self.first_index + self.n_paths, dtype=np.uint64)


def step_coefficients(market, dt: float) -> tuple[float, float]:
    """Log-drift and log-volatility of one step of length ``dt``."""
    return (market.r - 0.5 * market.sigma**2) * dt, market.sigma * math.sqrt(dt)


@numba.njit(cache=True, parallel=True)
def _gbm_fill(seed, path_indices, n_steps, s0, drift, vol):
    out = np.empty((path_indices.shape[0], n_steps + 1))
    for p in numba.prange(path_indices.shape[0]):
        idx = path_indices[p]
        s = s0
        out[p, 0] = s
        z = (0.0, 0.0, 0.0, 0.0)
        for k in range(n_steps):
            if k % 4 == 0:
                z = rng.normal_block(seed, idx, k // 4, rng.STREAM_PRICE)
            s = s * math.exp(drift + vol * z[k % 4])
            out[p, k + 1] = s
    return out


def simulate_paths(spec: PathBatchSpec) -> np.ndarray:
    """Price matrix of shape ``(n_paths, n_steps + 1)``; row i uses stream ``(base_seed, first_index + i)``."""
    drift, vol = step_coefficients(spec.market, spec.grid.dt)
    return _gbm_fill(
        np.uint64(spec.base_seed & 0xFFFFFFFFFFFFFFFF), spec.path_indices,
        spec.grid.n_steps, float(spec.market.s0), drift, vol,
    )


def simulate_path(market, grid: TimeGrid, seed: int, path_index: int = 0) -> PricePath:
    """One GBM path with drift ``r``; bit-identical for identical arguments."""
    spec = PathBatchSpec(1, seed, market, grid, first_index=path_index)
    return PricePath(grid, simulate_paths(spec)[0])


def bridge_knockout_prob(s_a: float, s_b: float, b: float, sigma: float, dt: float) -> float:
    """Probability that a GBM bridge from ``s_a`` to ``s_b`` over ``dt`` touches ``b`` from above."""
    if not dt > 0 or not sigma > 0:
        raise ValueError("dt and sigma must be positive")
    if s_a <= b or s_b <= b:
        return 1.0
    return math.exp(-2.0 * math.log(s_a / b) * math.log(s_b / b) / (sigma * sigma * dt))


def write_paths_csv(path: str | Path, prices: np.ndarray, grid: TimeGrid, first_index: int = 0) -> None:
    """Debug dump with columns path_id, step, time_years, price."""
    times = grid.times()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "step", "time_years", "price"])
        for i, row in enumerate(np.atleast_2d(prices)):
            for k, p in enumerate(row):
                w.writerow([first_index + i, k, f"{times[k]:.10g}", f"{p:.10g}"])
