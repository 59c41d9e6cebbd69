"""Desk-scale benchmark: metboost vs the grouping-variable baseline on simulated data.

    python3 scripts/desk_benchmark.py --reps 10 --out results/
"""

import argparse
import json
import time
from pathlib import Path

from metboost.simbench import SimConfig, default_grids, run_benchmark

CONDITIONS = {
    "small_groups_nonlinear": SimConfig(n=1000, effect="nonlinear", group_size=4, icc=0.5,
                                        n_predictors=25, n_random=5),
    "large_groups_linear": SimConfig(n=1000, effect="linear", group_size=40, icc=0.5,
                                     n_predictors=5, n_random=5),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=8)
    ap.add_argument("--cores", type=int, default=1)
    ap.add_argument("--conditions", nargs="*", default=list(CONDITIONS), choices=list(CONDITIONS))
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.conditions:
        t0 = time.perf_counter()
        _, summary = run_benchmark([CONDITIONS[name]], args.reps, grids=default_grids(), seed=args.seed,
                                   cores=args.cores, out=out / f"{name}_reps.csv",
                                   summary_out=out / f"{name}_summary.csv")
        print(name, json.dumps(summary[0]), f"{time.perf_counter() - t0:.0f}s", flush=True)


if __name__ == "__main__":
    main()
