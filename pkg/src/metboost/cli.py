"""Command-line entry point: ``metboost <command> [flags]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import Dataset, load_csv, write_csv
from .ensemble import BASELINE, METBOOST, BoostParams, boost, predict
from .errors import MetboostError, ParameterError
from .interpret import marginal_effects, relative_influence, write_influence, write_margins
from .modelfile import load_model, save_model
from .simbench import (SimConfig, SimTruth, _write_rows, default_grids, evaluate_dataset,
                       gen_sim_data, load_conditions, percent_improvement, run_benchmark)
from .tune import TuneGrid, cv_tune, write_report

R_NAMES = """\
flag names and the R argument each corresponds to:
  --outcome       y
  --id            id
  --n-trees       n.trees
  --depth         interaction.depth
  --shrinkage     shrinkage
  --min-node      n.minobsinnode
  --bag-fraction  bag.fraction
  --cv-folds      cv.folds
  --cores         mc.cores
"""


class UsageError(Exception):
    pass


def _list(kind):
    def parse(text):
        try:
            vals = tuple(kind(v) for v in text.split(",") if v.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid comma list {text!r}") from None
        if not vals:
            raise argparse.ArgumentTypeError("empty list")
        return vals
    return parse


def _data_flags(p, outcome_required=True):
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--outcome", required=outcome_required, default=None, help="outcome column")
    p.add_argument("--id", required=outcome_required, default=None, help="grouping column")
    p.add_argument("--na", default="NA", help="missing-value token")


def _boost_flags(p, lists=False):
    typ = (lambda k: _list(k)) if lists else (lambda k: k)
    p.add_argument("--n-trees", type=int, default=2500 if not lists else 1000, help="boosting stages")
    p.add_argument("--shrinkage", type=typ(float), default=(0.01,) if lists else 0.01,
                   help="step size" + (" (comma list)" if lists else ""))
    p.add_argument("--depth", type=typ(int), default=(3,) if lists else 3,
                   help="maximum tree depth" + (" (comma list)" if lists else ""))
    p.add_argument("--min-node", type=typ(int), default=(20,) if lists else 20,
                   help="minimum rows per terminal node" + (" (comma list)" if lists else ""))
    p.add_argument("--bag-fraction", type=float, default=0.5, help="per-stage subsample fraction")
    p.add_argument("--surrogates", type=int, default=5, help="surrogate splits kept per node")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--baseline", action="store_true",
                   help="plain boosted trees with the group as a predictor instead of metboost")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter, argparse.RawDescriptionHelpFormatter):
    pass


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    parser = argparse.ArgumentParser(prog="metboost", formatter_class=argparse.RawDescriptionHelpFormatter,
                                     description="Mixed-effects gradient tree boosting.", epilog=R_NAMES)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("fit", help="fit a model", formatter_class=fmt, epilog=R_NAMES)
    _data_flags(p)
    _boost_flags(p)
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--summary", default=None, help="optional JSON fit summary")

    p = sub.add_parser("predict", help="predict from a model", formatter_class=fmt)
    p.add_argument("--model", required=True, help="model file")
    _data_flags(p, outcome_required=False)
    p.add_argument("--n-trees", type=int, default=None, help="use only the first n stages (default all)")
    p.add_argument("--out", required=True, help="output prediction CSV")

    p = sub.add_parser("influence", help="relative influence", formatter_class=fmt)
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--exclude-group", action="store_true", help="drop the group predictor before normalising")
    p.add_argument("--out", required=True, help="output CSV")

    p = sub.add_parser("margins", help="predictions against one predictor by group", formatter_class=fmt)
    p.add_argument("--model", required=True, help="model file")
    _data_flags(p, outcome_required=False)
    p.add_argument("--predictor", required=True, help="predictor column")
    p.add_argument("--groups", type=_list(str), default=None, help="comma list of group labels (default all)")
    p.add_argument("--out", required=True, help="output CSV")

    p = sub.add_parser("tune", help="cross-validated grid search", formatter_class=fmt, epilog=R_NAMES)
    _data_flags(p)
    _boost_flags(p, lists=True)
    p.add_argument("--cv-folds", type=int, default=3, help="number of folds")
    p.add_argument("--cores", type=int, default=1, help="worker processes")
    p.add_argument("--report", required=True, help="output tuning report CSV")
    p.add_argument("--model", required=True, help="output model refit at the selected cell")

    p = sub.add_parser("simulate", help="generate simulated train/test data", formatter_class=fmt)
    p.add_argument("--n", type=int, default=1000, help="rows per set")
    p.add_argument("--P", type=int, default=25, help="number of predictors")
    p.add_argument("--p", type=int, default=None, help="active predictors (default 25%% of P, at least q)")
    p.add_argument("--q", type=int, default=5, help="predictors with group-specific slopes")
    p.add_argument("--group-size", type=int, default=4, help="rows per group")
    p.add_argument("--icc", type=float, default=0.5, help="intra-class correlation")
    p.add_argument("--r2", type=float, default=0.5, help="fixed-effect share of variance")
    p.add_argument("--effect", choices=("linear", "nonlinear"), default="nonlinear", help="effect shape")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out-dir", required=True, help="directory for train.csv, test.csv, truth.json")

    p = sub.add_parser("bench", help="metboost versus baseline benchmark", formatter_class=fmt)
    p.add_argument("--conditions", default=None, help="condition file (JSON list or CSV of SimConfig fields)")
    p.add_argument("--reps", type=int, default=1, help="replications per condition")
    p.add_argument("--train", default=None, help="training CSV from simulate")
    p.add_argument("--test", default=None, help="test CSV from simulate")
    p.add_argument("--truth", default=None, help="truth JSON from simulate")
    p.add_argument("--metboost-trees", type=int, default=500, help="metboost stages per fit")
    p.add_argument("--baseline-trees", type=int, default=2000, help="baseline stages per fit")
    p.add_argument("--cv-folds", type=int, default=3, help="number of folds")
    p.add_argument("--cores", type=int, default=1, help="worker processes")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", required=True, help="per-rep results CSV")
    p.add_argument("--summary", required=True, help="per-condition improvement CSV")
    return parser


def _readable(*paths):
    for path in paths:
        if path is not None and not os.access(path, os.R_OK):
            raise UsageError(f"cannot read {path}")


def _params(a) -> BoostParams:
    return BoostParams(n_trees=a.n_trees, shrinkage=a.shrinkage, depth=a.depth, min_node=a.min_node,
                       n_surrogates=a.surrogates, bag_fraction=a.bag_fraction, seed=a.seed)


def _load_for_model(a, model):
    return load_csv(a.data, a.outcome or model.outcome_name, a.id or model.id_name, a.na,
                    require_outcome=False)


def cmd_fit(a):
    _readable(a.data)
    params = _params(a)
    d = load_csv(a.data, a.outcome, a.id, a.na)
    model = boost(d, params, BASELINE if a.baseline else METBOOST)
    save_model(model, a.model)
    summary = {"mode": model.mode, "rows": d.n, "groups": d.g, "predictors": d.p,
               "stages": model.n_stages, "init": model.init,
               "train_mse": float(model.history["train_mse"][-1])}
    if a.summary:
        Path(a.summary).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(summary))


def cmd_predict(a):
    _readable(a.model, a.data)
    model = load_model(a.model)
    d = _load_for_model(a, model)
    yhat = predict(model, d, a.n_trees)
    with Path(a.out).open("w", encoding="utf-8") as fh:
        fh.write(f"{d.id_name},yhat\n")
        for gl, v in zip((d.group_labels[c] for c in d.groups), yhat):
            fh.write(f"{_csv_cell(gl)},{float(v)!r}\n")


def _csv_cell(s: str) -> str:
    return '"' + s.replace('"', '""') + '"' if any(c in s for c in ',"\n\r') else s


def cmd_influence(a):
    _readable(a.model)
    write_influence(relative_influence(load_model(a.model), a.exclude_group), a.out)


def cmd_margins(a):
    _readable(a.model, a.data)
    model = load_model(a.model)
    write_margins(marginal_effects(model, _load_for_model(a, model), a.predictor, a.groups), a.out)


def cmd_tune(a):
    _readable(a.data)
    grid = TuneGrid(shrinkage=a.shrinkage, depth=a.depth, min_node=a.min_node, n_trees=a.n_trees,
                    folds=a.cv_folds, seed=a.seed, bag_fraction=a.bag_fraction,
                    n_surrogates=a.surrogates)
    for cell in grid.cells():
        grid.params(cell, 0)
    d = load_csv(a.data, a.outcome, a.id, a.na)
    res = cv_tune(d, grid, BASELINE if a.baseline else METBOOST, cores=a.cores)
    write_report(res, a.report)
    save_model(res.model, a.model)
    lam, depth, min_node = res.cells[res.best_cell]
    print(json.dumps({"best_cell": res.best_cell, "shrinkage": lam, "depth": depth,
                      "min_node": min_node, "n_trees": res.best_m, "cv_mse": res.best_error}))


def cmd_simulate(a):
    cfg = SimConfig(n_predictors=a.P, n_random=a.q, effect=a.effect, group_size=a.group_size,
                    icc=a.icc, r2=a.r2, n=a.n, n_active=a.p, seed=a.seed)
    train, test, truth = gen_sim_data(cfg)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(train, out / "train.csv")
    write_csv(test, out / "test.csv")
    (out / "truth.json").write_text(json.dumps(truth.to_json(), indent=1) + "\n", encoding="utf-8")


def _bench_methods(a):
    grids = default_grids()
    met = replace(grids[METBOOST], n_trees=a.metboost_trees, folds=a.cv_folds)
    base = replace(grids[BASELINE], n_trees=a.baseline_trees, folds=a.cv_folds)
    return {METBOOST: (METBOOST, met), BASELINE: (BASELINE, base)}


def cmd_bench(a):
    files = (a.train, a.test, a.truth)
    if a.conditions is not None and any(f is not None for f in files):
        raise UsageError("--conditions conflicts with --train/--test/--truth")
    if a.conditions is None and not all(f is not None for f in files):
        raise UsageError("give --conditions, or all of --train, --test and --truth")
    methods = _bench_methods(a)
    if a.conditions is not None:
        _readable(a.conditions)
        run_benchmark(load_conditions(a.conditions), a.reps, methods=methods, seed=a.seed,
                      cores=a.cores, out=a.out, summary_out=a.summary)
        return
    _readable(*files)
    train = load_csv(a.train, "y", "id")
    test = load_csv(a.test, "y", "id")
    truth = SimTruth.from_json(json.loads(Path(a.truth).read_text(encoding="utf-8")))
    rows = evaluate_dataset(train, test, truth, methods, seed=a.seed)
    _write_rows(rows, a.out)
    _write_rows(percent_improvement(rows), a.summary)


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "influence": cmd_influence, "margins": cmd_margins,
            "tune": cmd_tune, "simulate": cmd_simulate, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except (UsageError, ParameterError) as exc:
        print(f"metboost {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (MetboostError, OSError, ValueError, np.linalg.LinAlgError, MemoryError, RuntimeError) as exc:
        print(f"metboost {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0
