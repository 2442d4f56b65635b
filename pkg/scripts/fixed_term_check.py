"""Closed-form fixed-term price against the bridge-corrected Monte Carlo estimate.

    python scripts/fixed_term_check.py --n-paths 500000
"""

import argparse
import time

from lendfair.analytic import price_fixed_term
from lendfair.mc import price_fixed_term_mc
from lendfair.model import LoanTerms, MarketParams

CASES = [
    (MarketParams(100, 0.05, 0.30), LoanTerms(0.02, 1.5, 1.2), 1.0),
    (MarketParams(100, 0.03746, 0.46), LoanTerms(0.0283, 1 / 0.805, 1 / 0.83), 0.5),
    (MarketParams(100, 0.02, 0.60), LoanTerms(0.05, 2.0, 1.3), 0.25),
    (MarketParams(100, 0.01, 0.80), LoanTerms(0.10, 1.8, 1.25), 1.0),
    (MarketParams(100, 0.04, 0.20), LoanTerms(0.0, 1.4, 1.15), 2.0),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-paths", type=int, default=500_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"{'r':>7} {'sigma':>5} {'alpha':>6} {'c':>6} {'c0':>6} {'T':>5} {'closed':>9} {'mc':>9} {'se':>7} {'z':>6}")
    for i, (m, t, T) in enumerate(CASES):
        start = time.perf_counter()
        mean, se = price_fixed_term_mc(m, t, T, args.n_paths, seed=args.seed + i)
        exact = price_fixed_term(m, t, T).value
        z = (mean - exact) / se
        print(f"{m.r:7.4f} {m.sigma:5.2f} {t.alpha:6.4f} {t.c:6.3f} {t.c0:6.3f} {T:5.2f} "
              f"{exact:9.4f} {mean:9.4f} {se:7.4f} {z:+6.2f}  ({time.perf_counter() - start:.1f}s)")


if __name__ == "__main__":
    main()
