"""Parameter sweeps of the calibrated top-up option value around the base parameters.

Writes one CSV per parameter through the ``lendfair sweep`` command, so each
file gets a manifest and can be rerun with ``lendfair sweep --config``.

    python scripts/trend_sweeps.py --n-train 20000 --n-test 50000 --out-dir results/sweeps
"""

import argparse
from pathlib import Path

from lendfair.cli import main as cli

GRIDS = {
    "r": (0.005, 0.05, 6),
    "sigma": (0.2, 0.5, 7),
    "delta": (0.0, 0.02, 5),
    "monitor-freq": (1, 8, 8),
    "alpha": (0.0, 0.1, 6),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-train", type=int, default=20_000)
    ap.add_argument("--n-test", type=int, default=50_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--params", nargs="+", default=list(GRIDS), choices=list(GRIDS))
    ap.add_argument("--out-dir", default="results/sweeps")
    args = ap.parse_args()

    out_dir = Path(args.out_dir)
    for name in args.params:
        lo, hi, n = GRIDS[name]
        code = cli(["sweep", "--param", name, "--from", str(lo), "--to", str(hi), "--points", str(n),
                    "--n-train", str(args.n_train), "--n-test", str(args.n_test), "--seed", str(args.seed),
                    "--out", str(out_dir / f"sweep_{name}.csv")])
        if code:
            raise SystemExit(code)


if __name__ == "__main__":
    main()
