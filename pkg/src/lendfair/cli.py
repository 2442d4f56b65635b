"""Command-line entry point: ``lendfair {price-fixed,fair-rate,sweep,verify,compare}``.

Exit codes: 0 success, 1 domain error, 2 usage error, 3 no solution.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

import lendfair
from lendfair.analytic import NoSolution, price_fixed_term, solve_fixed_term_fair_rate
from lendfair.model import BorrowerBehavior, LoanTerms, MarketParams
from lendfair.stats import DataError, fmt

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_NO_SOLUTION = 0, 1, 2, 3

# name -> (type, default, help)
MARKET = {
    "s0": (float, 100.0, "spot price of the collateral"),
    "r": (float, 0.03746, "risk-free rate"),
    "sigma": (float, 0.46, "annual volatility"),
}
LOAN = {
    "alpha": (float, 0.0283, "annual interest rate"),
    "c": (float, 1 / 0.805, "overcollateralisation parameter"),
    "c0": (float, 1 / 0.83, "liquidation parameter"),
}
SIM = {
    "beta": (float, 0.5, "fixed repayment fee"),
    "delta": (float, 0.005, "borrower's extra discount rate"),
    "monitor-freq": (int, 10, "monitoring events per day"),
    "topup-trigger": (float, 0.05, "relative distance to the barrier that triggers a top-up"),
    "topup-size": (float, 0.1, "collateral added per top-up"),
    "seed": (int, 0, "base seed"),
    "n-train": (int, 40_000, "calibration paths"),
    "n-test": (int, 200_000, "valuation paths"),
    "horizon": (float, 5.0, "simulation horizon in years"),
    "oversample": (int, 4, "simulation substeps per monitoring interval"),
}

COMMANDS = {
    "price-fixed": {**MARKET, **LOAN, "term": (float, 1.0, "loan term in years"),
                    "carry": (float, None, "drift of the underlying under pricing (default: r)")},
    "fair-rate": {"mode": (str, "perpetual", "fixed-term or perpetual"), **MARKET,
                  "c": LOAN["c"], "c0": LOAN["c0"], "term": (float, 1.0, "fixed-term loan term"),
                  "alpha-max": (float, None, "upper end of the rate bracket"),
                  "tol-rel": (float, 0.005, "relative tolerance on the option value"), **SIM},
    "sweep": {"param": (str, None, "alpha, r, sigma, delta or monitor-freq"),
              "from": (float, None, "first grid value"), "to": (float, None, "last grid value"),
              "points": (int, 5, "number of grid points"), **MARKET, **LOAN, **SIM,
              "out": (str, "sweep.csv", "output CSV")},
    "verify": {"suite": (str, "all", "replication, floor, trends or all"),
               "seed": (int, 0, "base seed"), "n-paths": (int, None, "paths per check (suite default if unset)")},
    "compare": {"input": (str, None, "monthly CSV"), "mode": (str, "perpetual", "fixed-term or perpetual"),
                "s0": MARKET["s0"], "c": LOAN["c"], "c0": LOAN["c0"],
                "term": (float, 1.0, "fixed-term loan term"), **SIM, "monitor-freq": (int, 8, SIM["monitor-freq"][2]),
                "alpha-max": (float, None, "upper end of the rate bracket"),
                "out-dir": (str, "compare_out", "output directory")},
}
CHOICES = {"mode": ("fixed-term", "perpetual"), "suite": ("replication", "floor", "trends", "all"),
           "param": ("alpha", "r", "sigma", "delta", "monitor-freq")}


def _key(name: str) -> str:
    return name.replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lendfair", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lendfair {lendfair.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, spec in COMMANDS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="key=value file or a run manifest (.json); flags take precedence")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        for name, (typ, default, help_) in spec.items():
            kw = {"type": typ, "default": None, "help": f"{help_} (default: {default})"}
            if name in CHOICES:
                kw["choices"] = CHOICES[name]
            p.add_argument(f"--{name}", dest=_key(name), **kw)
    return parser


def read_config(path: str, spec: dict) -> dict:
    text = Path(path).read_text()
    if path.endswith(".json"):
        raw = json.loads(text)
        raw = raw.get("params", raw)
    else:
        raw = {}
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            raw[k] = v
    out = {}
    for k, v in raw.items():
        name = k.replace("_", "-")
        if name not in spec:
            raise ValueError(f"{path}: unknown key {k!r}")
        out[_key(name)] = None if v is None else spec[name][0](v)
    return out


def resolve(args: argparse.Namespace) -> dict:
    spec = COMMANDS[args.command]
    params = {_key(n): d for n, (_, d, _) in spec.items()}
    if args.config:
        params.update(read_config(args.config, spec))
    for n in spec:
        v = getattr(args, _key(n))
        if v is not None:
            params[_key(n)] = v
    return params


def write_manifest(csv_path: Path, command: str, params: dict, started: float) -> Path:
    manifest = {
        "command": command,
        "params": params,
        "base_seed": params.get("seed"),
        "version": lendfair.__version__,
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    path = csv_path.with_name(csv_path.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _emit(obj: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(obj, sort_keys=True))
    else:
        for k, v in obj.items():
            print(f"{k}: {fmt(v) if isinstance(v, float) else v}")


def _sim_config(p: dict):
    from lendfair.mc import SimConfig
    return SimConfig(n_train=p["n_train"], n_test=p["n_test"], horizon=p["horizon"],
                     oversample=p["oversample"], base_seed=p["seed"])


def _behavior(p: dict) -> BorrowerBehavior:
    return BorrowerBehavior(delta=p["delta"], monitor_freq=p["monitor_freq"],
                            topup_trigger=p["topup_trigger"], topup_size=p["topup_size"])


def _market(p: dict) -> MarketParams:
    return MarketParams(p["s0"], p["r"], p["sigma"])


# ---------------------------------------------------------------------------


def cmd_price_fixed(p: dict, as_json: bool) -> int:
    quote = price_fixed_term(_market(p), LoanTerms(p["alpha"], p["c"], p["c0"]), p["term"], p["carry"])
    out = {"value": quote.value, "eta1": quote.eta1, "eta2": quote.eta2, "sigma_T": quote.sigma_T,
           "carry": quote.carry, "knocked_out_at_inception": quote.knocked_out_at_inception}
    _emit(out, as_json)
    if quote.knocked_out_at_inception and not as_json:
        print("note: barrier at or above spot at inception; the option is knocked out")
    return EXIT_OK


def cmd_fair_rate(p: dict, as_json: bool) -> int:
    market = MarketParams(p["s0"], p["r"], p["sigma"])
    if p["mode"] == "fixed-term":
        res = solve_fixed_term_fair_rate(market, p["c"], p["c0"], p["term"], p["alpha_max"] or 5.0)
        value = price_fixed_term(market, LoanTerms(res.alpha, p["c"], p["c0"]), p["term"]).value
        _emit({"mode": "fixed-term", "alpha": res.alpha, "value": value,
               "target": market.s0 * (1 - 1 / p["c"]), "residual": res.residual,
               "iterations": res.iterations}, as_json)
        return EXIT_OK
    from lendfair.mc import solve_fair_rate
    res = solve_fair_rate(market, p["c"], p["c0"], p["beta"], _behavior(p), _sim_config(p),
                          tol_rel=p["tol_rel"], bracket=(0.0, p["alpha_max"] or 2.0))
    v = res.valuation
    out = {"mode": "perpetual", "alpha": res.alpha, "value": v.value, "std_error": v.std_error,
           "target": res.target, "relative_error": res.relative_error,
           "within_tolerance": res.relative_error <= p["tol_rel"], "iterations": res.iterations,
           "s_star": v.policy.s_star, "mean_duration": v.mean_duration, "degenerate": res.degenerate}
    _emit(out, as_json)
    if res.degenerate:
        print("warning: with no fixed fee the only fair rates make immediate repayment optimal "
              f"(mean duration {v.mean_duration:.4g} years)", file=sys.stderr)
    return EXIT_OK


SWEEP_COLUMNS = ["parameter_name", "parameter_value", "alpha", "value", "std_error", "mean_duration",
                 "liquidation_rate", "mean_topups", "s_star"]


def cmd_sweep(p: dict, as_json: bool, started: float) -> int:
    from lendfair.mc import sweep
    if p["param"] is None or p["from"] is None or p["to"] is None:
        raise UsageError("sweep needs --param, --from and --to")
    if p["points"] < 1:
        raise ValueError("--points must be >= 1")
    values = np.linspace(p["from"], p["to"], p["points"]) if p["points"] > 1 else np.array([p["from"]])
    terms = LoanTerms(p["alpha"], p["c"], p["c0"], p["beta"])
    rows = sweep(p["param"], values, _market(p), terms, _behavior(p), _sim_config(p))
    out = Path(p["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            r = row.result
            w.writerow([row.parameter_name, fmt(row.parameter_value), fmt(row.alpha), fmt(r.value),
                        fmt(r.std_error), fmt(r.mean_duration), fmt(r.liquidation_rate),
                        fmt(r.mean_topups), fmt(r.policy.s_star)])
    write_manifest(out, "sweep", p, started)
    if as_json:
        print(json.dumps({"out": str(out), "rows": len(rows)}))
    else:
        for row in rows:
            print(f"{row.parameter_name}={fmt(row.parameter_value)} value={fmt(row.result.value)} "
                  f"se={fmt(row.result.std_error)}")
    return EXIT_OK


def cmd_verify(p: dict, as_json: bool) -> int:
    from lendfair import verify
    suites = ("replication", "floor", "trends") if p["suite"] == "all" else (p["suite"],)
    n = p["n_paths"]
    checks = []
    for suite in suites:
        if suite == "replication":
            checks += verify.replication_checks(n or 1000, p["seed"])
        elif suite == "floor":
            checks += verify.floor_checks(n or 50_000, p["seed"])
        else:
            n_test = n or 50_000
            checks += verify.trend_checks(max(1, (2 * n_test) // 5), n_test, p["seed"])
    for c in checks:
        if as_json:
            print(json.dumps({"name": c.name, "passed": c.passed, "margin": c.margin, "detail": c.detail}))
        else:
            print(c.line())
    failed = [c for c in checks if not c.passed]
    if not as_json:
        print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_DOMAIN if failed else EXIT_OK


def month_solver(p: dict):
    """Fair-rate solver for one month's market conditions."""
    from lendfair.stats import MonthlyRecord

    def solve(rec: MonthlyRecord) -> float:
        market = MarketParams(p["s0"], rec.risk_free, rec.volatility)
        if p["mode"] == "fixed-term":
            return solve_fixed_term_fair_rate(market, p["c"], p["c0"], p["term"], p["alpha_max"] or 5.0).alpha
        from lendfair.mc import solve_fair_rate
        return solve_fair_rate(market, p["c"], p["c0"], p["beta"], _behavior(p), _sim_config(p),
                               bracket=(0.0, p["alpha_max"] or 2.0)).alpha

    return solve


def cmd_compare(p: dict, as_json: bool, started: float) -> int:
    from lendfair.stats import compare_rates, load_monthly_csv, write_rates_csv, write_stats_csv
    if p["input"] is None:
        raise UsageError("compare needs --input")
    records = load_monthly_csv(p["input"])
    report = compare_rates(records, month_solver(p))
    out_dir = Path(p["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    rates, stats = out_dir / "rates.csv", out_dir / "stats.csv"
    write_rates_csv(rates, report)
    write_stats_csv(stats, report)
    write_manifest(rates, "compare", p, started)
    write_manifest(stats, "compare", p, started)
    summary = {"rates_csv": str(rates), "stats_csv": str(stats), "n_used": report.n_used,
               "pearson_r": report.pearson_r, "p_value": report.p_value}
    if as_json:
        print(json.dumps(summary, sort_keys=True))
    else:
        for m in report.months:
            print(f"{m.record.month} model_rate={fmt(m.model_rate) or '-'} status={m.status}")
        if report.pearson_r is None:
            has_obs = any(r.observed_rate is not None for r in records)
            why = "fewer than 3 solved months with observed rates" if has_obs else "no observed rates"
            print(f"{why}: correlation not computed")
        else:
            print(f"pearson_r: {report.pearson_r:.6f}")
            print(f"p_value: {report.p_value:.6f}")
    return EXIT_OK


class UsageError(Exception):
    pass


def _set_threads() -> None:
    raw = os.environ.get("LENDFAIR_THREADS")
    if not raw:
        return
    import numba
    n = max(1, int(raw))
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        params = resolve(args)
        _set_threads()
        if args.command == "price-fixed":
            return cmd_price_fixed(params, args.json)
        if args.command == "fair-rate":
            return cmd_fair_rate(params, args.json)
        if args.command == "sweep":
            return cmd_sweep(params, args.json, started)
        if args.command == "verify":
            return cmd_verify(params, args.json)
        return cmd_compare(params, args.json, started)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lendfair: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoSolution as exc:
        print(f"no solution ({exc.side}): {exc}", file=sys.stderr)
        for k, v in exc.diagnostics.items():
            print(f"  {k}: {v}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except (ValueError, DataError, OSError) as exc:
        print(f"lendfair: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
