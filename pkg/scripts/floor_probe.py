"""Value-floor probe: calibrated option value against the loan amount over a grid of rates.

    python scripts/floor_probe.py --n-paths 50000 --out results/floor_probe.csv
"""

import argparse
import csv
from pathlib import Path

from lendfair.mc import SimConfig, impossibility_probe
from lendfair.stats import fmt
from lendfair.verify import PROBE_C, PROBE_C0, PROBE_MARKET


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-paths", type=int, default=50_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0])
    ap.add_argument("--out", default="results/floor_probe.csv")
    args = ap.parse_args()

    config = SimConfig(n_train=args.n_paths, n_test=args.n_paths, base_seed=args.seed)
    report = impossibility_probe(PROBE_MARKET, PROBE_C, PROBE_C0, args.alphas, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "value", "std_error", "floor", "mean_duration", "s_star"])
        for row in report.rows:
            w.writerow([fmt(row.alpha), fmt(row.value), fmt(row.std_error), fmt(row.floor),
                        fmt(row.mean_duration), fmt(row.s_star)])
            print(f"alpha={row.alpha:<5g} value={row.value:.4f} se={row.std_error:.4f} "
                  f"floor={row.floor:.4f} duration={row.mean_duration:.4f}")
    print(f"floor holds everywhere: {report.floor_holds}; wrote {out}")


if __name__ == "__main__":
    main()
