"""Plain RNNT vs consistency + text branch on the toy task, per seed.

    python3 scripts/toy_sweep.py                      # the acceptance setting (seeds 0-4)
    python3 scripts/toy_sweep.py --seeds 5-14 --lambda-text 0.3 --json out.json
"""

import argparse
import sys
import time

from astra.experiments import sweep
from astra.tensor import dumps


def seed_range(text: str) -> range:
    lo, _, hi = text.partition("-")
    return range(int(lo), int(hi or lo) + 1)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=seed_range, default=range(5), help="inclusive range, e.g. 0-4")
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--lambda", dest="lam", type=float, default=0.1)
    ap.add_argument("--lambda-text", type=float, default=0.1)
    ap.add_argument("--pointwise", choices=["mae", "mse"], default="mae")
    ap.add_argument("--n-train", type=int, default=100)
    ap.add_argument("--json", help="also write per-seed results here")
    args = ap.parse_args(argv)

    start = time.perf_counter()
    result = sweep(
        args.seeds,
        steps=args.steps,
        lambda_consistency=args.lam,
        lambda_text=args.lambda_text,
        pointwise=args.pointwise,
        n_train=args.n_train,
    )
    elapsed = time.perf_counter() - start

    print(f"{'seed':>4}  {'TER base':>9}  {'TER astra':>9}  {'l_c base':>8}  {'l_c astra':>9}")
    for r in result.rows:
        print(f"{r.seed:>4}  {r.baseline_ter:9.4f}  {r.astra_ter:9.4f}  {r.baseline_l_c:8.3f}  {r.astra_l_c:9.3f}")
    print(
        f"median TER {result.median_baseline_ter:.4f} -> {result.median_astra_ter:.4f}; "
        f"strict wins {result.strict_wins}/{len(result.rows)}; "
        f"median l_c drop {result.l_c_reduction:.1%}; {elapsed:.0f} s"
    )
    if args.json:
        with open(args.json, "w") as f:
            f.write(dumps({"config": vars(args) | {"seeds": list(args.seeds)}, "rows": [r.__dict__ for r in result.rows]}, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
