"""Finite-difference and brute-force verification report.

    python3 scripts/gradcheck_report.py --trials 50 --oracle-trials 200
"""

import argparse
import sys
import time

from astra.cli import oracle_check
from astra.gradcheck import run_suites


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--oracle-trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    t0 = time.perf_counter()
    grads = run_suites(args.trials, args.seed)
    t1 = time.perf_counter()
    oracle = oracle_check(6, 4, args.oracle_trials, args.seed)
    t2 = time.perf_counter()

    print(f"gradient suites ({args.trials} instances, {t1 - t0:.1f} s), max relative error:")
    for k, v in grads.items():
        print(f"  {k:<14} {v:.2e}")
    print(f"oracle equivalence ({args.oracle_trials} instances, {t2 - t1:.1f} s), max absolute discrepancy:")
    print(f"  rnnt           {oracle['rnnt']:.2e}")
    print(f"  ctc            {oracle['ctc']:.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
