"""Monthly market-data ingestion, model-vs-market rate comparison and the statistics behind it."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from lendfair.analytic import NoSolution

_MONTH = re.compile(r"^\d{4}-(0[1-9]|1[0-2])$")
REQUIRED_COLUMNS = ("month", "risk_free", "volatility")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class MonthlyRecord:
    month: str
    risk_free: float
    volatility: float
    observed_rate: float | None = None

    def __post_init__(self):
        if not self.volatility > 0:
            raise ValueError(f"volatility must be positive, got {self.volatility}")


def _number(raw: str, column: str, row: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise DataError(f"row {row}: column {column!r} is not numeric: {raw!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}: column {column!r} is not finite: {raw!r}")
    return value


def load_monthly_csv(path: str | Path) -> list[MonthlyRecord]:
    """Read ``month,risk_free,volatility[,observed_rate]`` rows in file order.

    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise DataError(f"missing column(s): {', '.join(missing)}")
        reader.fieldnames = header
        records, seen = [], set()
        for row_no, row in enumerate(reader, start=2):
            month = (row.get("month") or "").strip()
            if not _MONTH.match(month):
                raise DataError(f"row {row_no}: month must look like YYYY-MM, got {month!r}")
            if month in seen:
                raise DataError(f"row {row_no}: duplicate month {month}")
            seen.add(month)
            rf = _number((row.get("risk_free") or "").strip(), "risk_free", row_no)
            vol = _number((row.get("volatility") or "").strip(), "volatility", row_no)
            if vol <= 0:
                raise DataError(f"row {row_no}: volatility must be positive, got {vol}")
            raw_obs = (row.get("observed_rate") or "").strip()
            obs = _number(raw_obs, "observed_rate", row_no) if raw_obs else None
            records.append(MonthlyRecord(month, rf, vol, obs))
    return records


# ---------------------------------------------------------------------------
# statistics


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise ValueError("series lengths differ")
    n = len(xs)
    if n < 3:
        raise ValueError("need at least 3 points")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        raise ValueError("degenerate variance")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, 1000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, dof: float) -> float:
    """``P(|T| >= |t|)`` for Student's t with ``dof`` degrees of freedom."""
    t2 = t * t
    if t2 < dof:
        # complementary form avoids cancellation in 1 - dof/(dof + t^2)
        return 1.0 - betainc_regularized(0.5, dof / 2.0, t2 / (dof + t2))
    return betainc_regularized(dof / 2.0, 0.5, dof / (dof + t2))


def p_value_two_sided(r: float, n: int) -> float:
    """Two-sided p-value of the t-test for a Pearson correlation ``r`` on ``n`` points."""
    if n < 3:
        raise ValueError("need n >= 3")
    if abs(r) > 1:
        raise ValueError("|r| must not exceed 1")
    if abs(r) == 1:
        return 0.0
    dof = n - 2
    t = r * math.sqrt(dof / (1.0 - r * r))
    return min(1.0, max(0.0, t_sf_two_sided(t, dof)))


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def linreg(xs: Sequence[float], ys: Sequence[float]) -> LinearFit:
    if len(xs) != len(ys):
        raise ValueError("series lengths differ")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least 2 points")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise ValueError("degenerate x")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    syy = math.fsum((y - my) ** 2 for y in ys)
    slope = sxy / sxx
    r2 = 0.0 if syy == 0 else min(1.0, sxy * sxy / (sxx * syy))
    return LinearFit(slope, my - slope * mx, r2)


# ---------------------------------------------------------------------------
# comparison pipeline


@dataclass(frozen=True)
class MonthResult:
    record: MonthlyRecord
    model_rate: float | None
    status: str
    detail: str = ""


@dataclass(frozen=True)
class Regression:
    response: str
    regressor: str
    fit: LinearFit
    pearson_r: float
    p_value: float
    n: int


@dataclass(frozen=True)
class ComparisonReport:
    months: tuple[MonthResult, ...]
    pearson_r: float | None
    p_value: float | None
    n_used: int
    regressions: tuple[Regression, ...] = ()

    def metrics(self) -> list[tuple[str, float]]:
        out: list[tuple[str, float]] = [("n_months", len(self.months)), ("n_used", self.n_used)]
        if self.pearson_r is not None:
            out += [("pearson_r", self.pearson_r), ("r_squared", self.pearson_r**2),
                    ("p_value", self.p_value)]
        for reg in self.regressions:
            key = f"{reg.response}_vs_{reg.regressor}"
            out += [(f"{key}_slope", reg.fit.slope), (f"{key}_intercept", reg.fit.intercept),
                    (f"{key}_r_squared", reg.fit.r_squared), (f"{key}_pearson_r", reg.pearson_r),
                    (f"{key}_p_value", reg.p_value)]
        return out


RateSolver = Callable[[MonthlyRecord], float]


def _regress(response: str, regressor: str, xs, ys) -> Regression | None:
    if len(xs) < 3:
        return None
    try:
        fit = linreg(xs, ys)
        r = pearson(xs, ys)
    except ValueError:
        return None
    return Regression(response, regressor, fit, r, p_value_two_sided(r, len(xs)), len(xs))


def compare_rates(records: Sequence[MonthlyRecord], solver: RateSolver) -> ComparisonReport:
    """Fair rate per month via ``solver`` and its statistics against the observed rates.

    Months where the solver raises NoSolution are flagged and left out of
    every statistic.
    """
    if len(records) < 3:
        raise ValueError("need at least 3 monthly records")
    months = []
    for rec in records:
        try:
            months.append(MonthResult(rec, float(solver(rec)), "ok"))
        except NoSolution as exc:
            months.append(MonthResult(rec, None, f"no_solution_{exc.side}" if exc.side else "no_solution",
                                      str(exc)))
    used = [m for m in months if m.model_rate is not None]
    model = [m.model_rate for m in used]
    pr = pv = None
    with_obs = [m for m in used if m.record.observed_rate is not None]
    has_observed = any(rec.observed_rate is not None for rec in records)
    if has_observed and len(with_obs) >= 3:
        xs = [m.model_rate for m in with_obs]
        ys = [m.record.observed_rate for m in with_obs]
        try:
            pr = pearson(xs, ys)
            pv = p_value_two_sided(pr, len(xs))
        except ValueError:
            pr = pv = None
    regs = []
    for regressor in ("risk_free", "volatility"):
        xs = [getattr(m.record, regressor) for m in used]
        reg = _regress("model_rate", regressor, xs, model)
        if reg:
            regs.append(reg)
        if has_observed:
            reg = _regress("observed_rate", regressor, [getattr(m.record, regressor) for m in with_obs],
                           [m.record.observed_rate for m in with_obs])
            if reg:
                regs.append(reg)
    return ComparisonReport(tuple(months), pr, pv, len(used), tuple(regs))


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return f"{x:.10g}"


def write_rates_csv(path: str | Path, report: ComparisonReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", "risk_free", "volatility", "observed_rate", "model_rate", "status"])
        for m in report.months:
            r = m.record
            w.writerow([r.month, fmt(r.risk_free), fmt(r.volatility), fmt(r.observed_rate),
                        fmt(m.model_rate), m.status])


def write_stats_csv(path: str | Path, report: ComparisonReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for name, value in report.metrics():
            w.writerow([name, fmt(value)])
