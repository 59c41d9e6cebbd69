"""Per-tree fit time for both modes at the throughput benchmark size (N=1000, P=25, 250 groups)."""

import argparse
import time

from metboost.ensemble import BASELINE, METBOOST, BoostParams, boost
from metboost.simbench import SimConfig, gen_sim_data


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-trees", type=int, default=1000)
    ap.add_argument("--depth", type=int, default=3)
    ap.add_argument("--surrogates", type=int, default=5)
    args = ap.parse_args()
    train, _, _ = gen_sim_data(SimConfig(n=1000, n_predictors=25, group_size=4, seed=13))
    boost(train, BoostParams(n_trees=2), METBOOST)  # JIT warm-up
    for mode in (METBOOST, BASELINE):
        p = BoostParams(n_trees=args.n_trees, shrinkage=0.01, depth=args.depth, n_surrogates=args.surrogates)
        t0 = time.perf_counter()
        boost(train, p, mode)
        dt = time.perf_counter() - t0
        print(f"{mode:9s} {args.n_trees} trees  {dt:7.2f} s  {1000 * dt / args.n_trees:6.2f} ms/tree")


if __name__ == "__main__":
    main()
