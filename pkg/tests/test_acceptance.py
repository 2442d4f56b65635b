"""Acceptance criteria at their stated tolerances, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or ``python -m tests.test_acceptance``.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from lendfair import verify
from lendfair.analytic import price_fixed_term
from lendfair.mc import SimConfig, calibrated_value, price_fixed_term_mc, solve_fair_rate
from lendfair.model import LoanTerms, MarketParams
from lendfair.paths import PathBatchSpec, TimeGrid, simulate_paths
from lendfair.stats import p_value_two_sided
from tests.acceptance_log import record

FIXTURE = os.path.join(os.path.dirname(__file__), "fixtures", "synthetic_months.csv")

AC1_SETS = [
    (MarketParams(100, 0.05, 0.30), LoanTerms(0.02, 1.5, 1.2), 1.0),
    (MarketParams(100, 0.03746, 0.46), LoanTerms(0.0283, 1 / 0.805, 1 / 0.83), 0.5),
    (MarketParams(100, 0.02, 0.60), LoanTerms(0.05, 2.0, 1.3), 0.25),
    (MarketParams(100, 0.01, 0.80), LoanTerms(0.10, 1.8, 1.25), 1.0),
    (MarketParams(100, 0.04, 0.20), LoanTerms(0.0, 1.4, 1.15), 2.0),
]


@pytest.mark.slow
@pytest.mark.parametrize("i", range(len(AC1_SETS)))
def test_ac1_analytic_vs_bridge_mc(i):
    market, terms, T = AC1_SETS[i]
    start = time.perf_counter()
    mean, se = price_fixed_term_mc(market, terms, T, n_paths=500_000, seed=i)
    elapsed = time.perf_counter() - start
    exact = price_fixed_term(market, terms, T).value
    ok = abs(mean - exact) <= 3 * se and elapsed < 120
    record(f"AC1[{i}] analytic vs bridge MC", ok,
           f"closed={exact:.4f} mc={mean:.4f}±{se:.4f} |z|={abs(mean - exact) / se:.2f} time={elapsed:.1f}s")
    assert ok


def test_ac2_replication():
    checks = verify.replication_checks(n_paths=1000, seed=0, tol=1e-9)
    ok = all(c.passed for c in checks)
    worst = 1e-9 - min(c.margin for c in checks)
    record("AC2 replication equality", ok, f"{sum(c.passed for c in checks)}/{len(checks)} checks, "
                                           f"max|diff|={worst:.3g}")
    for c in checks:
        print(c.line())
    assert ok


@pytest.mark.slow
def test_ac3_floor_and_convergence():
    start = time.perf_counter()
    checks = verify.floor_checks(n_paths=50_000, seed=0)
    elapsed = time.perf_counter() - start
    n_alpha = sum(c.name.startswith("floor/alpha") for c in checks)
    ok = all(c.passed for c in checks) and n_alpha >= 6 and elapsed < 600
    record("AC3 value floor and convergence", ok,
           f"{sum(c.passed for c in checks)}/{len(checks)} checks over {n_alpha} rates, time={elapsed:.0f}s")
    for c in checks:
        print(c.line())
    assert ok


@pytest.mark.slow
@pytest.mark.parametrize("spec", verify.TREND_SPECS, ids=[s[0] for s in verify.TREND_SPECS])
def test_ac4_trends(spec):
    param, lo, hi, sign = spec
    config = SimConfig(n_train=20_000, n_test=50_000, base_seed=0)
    a = verify.trend_value(param, lo, config)
    b = verify.trend_value(param, hi, config)
    se = math.hypot(a.std_error, b.std_error)
    diff = b.value - a.value
    ok = sign * diff > 2 * se
    word = "increasing" if sign > 0 else "decreasing"
    record(f"AC4 {word} in {param}", ok,
           f"v({lo})={a.value:.3f}±{a.std_error:.3f} v({hi})={b.value:.3f}±{b.std_error:.3f} "
           f"diff/se={diff / se:+.2f} (need {'>' if sign > 0 else '<'} {2 * sign:+d})")
    assert ok


# reduced path counts keep the bisection within a test-suite budget
AC5_CONFIG = SimConfig(n_train=10_000, n_test=20_000, base_seed=0)


@pytest.mark.slow
def test_ac5_fair_rate_self_consistency():
    m, t, b = verify.BASE_MARKET, verify.BASE_TERMS, verify.BASE_BEHAVIOR
    start = time.perf_counter()
    res = solve_fair_rate(m, t.c, t.c0, t.beta, b, AC5_CONFIG, tol_rel=0.005)
    repriced = calibrated_value(m, LoanTerms(res.alpha, t.c, t.c0, t.beta), b, AC5_CONFIG)
    target = m.s0 * (1 - 1 / t.c)
    rel = abs(repriced.value - target) / target
    ok = res.iterations <= 14 and rel <= 0.005
    record("AC5 fair-rate self-consistency", ok,
           f"alpha={res.alpha:.5f} steps={res.iterations} value={repriced.value:.4f}±{repriced.std_error:.4f} "
           f"target={target:.4f} rel_err={rel:.4%} time={time.perf_counter() - start:.0f}s")
    assert ok


def test_ac6_p_value_anchors():
    p1, p2 = p_value_two_sided(0.575, 12), p_value_two_sided(0.623, 12)
    ok = abs(p1 - 0.050) <= 0.002 and abs(p2 - 0.030) <= 0.002
    record("AC6 p-value anchors", ok, f"p(0.575,12)={p1:.5f} p(0.623,12)={p2:.5f}")
    assert ok


TINY = ["--n-train", "300", "--n-test", "500", "--horizon", "0.5", "--seed", "11"]
AC7_COMMANDS = {
    "price-fixed": (["price-fixed", "--json"], []),
    "fair-rate": (["fair-rate", "--json", "--n-train", "300", "--n-test", "500", "--seed", "11"], []),
    "sweep": (["sweep", "--param", "sigma", "--from", "0.3", "--to", "0.6", "--points", "3", *TINY,
               "--out", "{d}/sweep.csv"], ["sweep.csv"]),
    "compare": (["compare", "--input", FIXTURE, "--c", "1.7", "--c0", "1.2", *TINY, "--out-dir", "{d}"],
                ["rates.csv", "stats.csv"]),
    "compare-fixed": (["compare", "--input", FIXTURE, "--mode", "fixed-term", "--out-dir", "{d}"],
                      ["rates.csv", "stats.csv"]),
}


def _run_cli(argv, out_dir, threads):
    env = dict(os.environ, LENDFAIR_THREADS=str(threads))
    argv = [a.replace("{d}", str(out_dir)) for a in argv]
    proc = subprocess.run([sys.executable, "-m", "lendfair.cli", *argv], env=env, capture_output=True)
    return proc.returncode, proc.stdout


@pytest.mark.parametrize("name", AC7_COMMANDS)
def test_ac7_determinism_across_threads(name, tmp_path):
    argv, files = AC7_COMMANDS[name]
    outs = []
    for threads in (1, 8):
        d = tmp_path / f"t{threads}"
        d.mkdir()
        code, stdout = _run_cli(argv, d, threads)
        outs.append((code, stdout, [(d / f).read_bytes() for f in files]))
    ok = outs[0] == outs[1] and all(outs[0][2])
    record(f"AC7 determinism [{name}]", ok,
           f"exit={outs[0][0]} files={files or ['stdout']} identical={outs[0] == outs[1]}")
    assert ok


def test_ac8_gbm_moments():
    market, T, n = MarketParams(100.0, 0.05, 0.46), 1.0, 100_000
    s_T = simulate_paths(PathBatchSpec(n, 2024, market, TimeGrid(T, 1)))[:, -1]
    mean_se = s_T.std(ddof=1) / math.sqrt(n)
    mean_z = (s_T.mean() - market.s0 * math.exp(market.r * T)) / mean_se
    log_var = np.log(s_T).var(ddof=1)
    var_target = market.sigma**2 * T
    var_se = var_target * math.sqrt(2 / (n - 1))
    var_z = (log_var - var_target) / var_se
    ok = abs(mean_z) <= 3 and abs(var_z) <= 3
    record("AC8 GBM moments", ok, f"mean z={mean_z:+.2f} log-variance z={var_z:+.2f}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
