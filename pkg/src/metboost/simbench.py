"""Simulated clustered data and the metboost-versus-baseline comparison harness.

Data follow ``y = beta * sum_j f_j(x_j) + Z b + e`` over the active
predictors. The first ``q`` transformed active columns get group-specific
slopes ``b ~ N(0, 1)``. The error variance sets the ICC of a unit-variance
random effect, and ``beta`` is calibrated to a target share of variance
explained by the fixed part.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .data import Dataset
from .ensemble import BASELINE, METBOOST, predict
from .errors import DataError, ParameterError
from .interpret import relative_influence
from .tune import TuneGrid, cv_tune, derive_seed

TRANSFORMS = (
    ("identity", lambda x: x),
    ("square", lambda x: x * x),
    ("sqrt_abs", lambda x: np.sqrt(np.abs(x))),
    ("cos_pi", lambda x: np.cos(np.pi * x)),
    ("abs_sin_pi", lambda x: np.abs(np.sin(np.pi * x))),
)


def transform(kind: int, x):
    return TRANSFORMS[kind][1](np.asarray(x, dtype=float))


def error_variance(icc: float) -> float:
    """Error variance giving a unit-variance random effect the requested ICC."""
    if not 0 < icc < 1:
        raise ParameterError(f"icc must be in (0, 1), got {icc}")
    return 1.0 / icc - 1.0  # equals (1 - icc) / icc, exact at .5 and .8


@dataclass(frozen=True)
class SimConfig:
    n_predictors: int = 25          # P
    n_random: int = 5               # q, capped at P
    effect: str = "nonlinear"       # "linear" | "nonlinear"
    group_size: int = 4
    icc: float = 0.5
    r2: float = 0.5
    n: int = 1000
    active_fraction: float = 0.25
    n_active: Optional[int] = None  # p; default max(q, round(active_fraction * P)), capped at P
    seed: int = 0

    def __post_init__(self):
        if self.effect not in ("linear", "nonlinear"):
            raise ParameterError(f"effect must be 'linear' or 'nonlinear', got {self.effect!r}")
        if self.n_predictors < 1 or self.n_random < 0 or self.group_size < 1 or self.n < 1:
            raise ParameterError(f"invalid simulation sizes in {self}")
        if self.group_size > self.n:
            raise ParameterError("group_size exceeds n")
        error_variance(self.icc)
        if not 0 < self.r2 < 1:
            raise ParameterError(f"r2 must be in (0, 1), got {self.r2}")
        if self.n_active is not None and not self.q <= self.n_active <= self.n_predictors:
            raise ParameterError("need q <= p <= P")

    @property
    def q(self) -> int:
        return min(self.n_random, self.n_predictors)

    @property
    def p(self) -> int:
        if self.n_active is not None:
            return self.n_active
        p = int(np.floor(self.active_fraction * self.n_predictors + 0.5))
        return min(self.n_predictors, max(self.q, p, 1))

    @property
    def g(self) -> int:
        return max(1, int(np.floor(self.n / self.group_size + 0.5)))

    def group_sizes(self) -> np.ndarray:
        g = self.g
        sizes = np.full(g, self.n // g)
        sizes[: self.n % g] += 1
        return sizes


@dataclass
class SimTruth:
    active: np.ndarray       # active predictor indices
    transforms: np.ndarray   # transform id per active predictor
    random_cols: np.ndarray  # predictor indices carrying group-specific slopes
    beta: float
    b: np.ndarray            # (g, q)
    sigma2: float
    realized: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"active": self.active.tolist(), "transforms": self.transforms.tolist(),
                "transform_names": [TRANSFORMS[t][0] for t in self.transforms],
                "random_cols": self.random_cols.tolist(), "beta": self.beta,
                "b": self.b.tolist(), "sigma2": self.sigma2, "realized": self.realized}

    @classmethod
    def from_json(cls, obj: dict) -> "SimTruth":
        return cls(np.array(obj["active"], dtype=np.int64), np.array(obj["transforms"], dtype=np.int64),
                   np.array(obj["random_cols"], dtype=np.int64), float(obj["beta"]),
                   np.array(obj["b"], dtype=float).reshape(-1, len(obj["random_cols"])),
                   float(obj["sigma2"]), dict(obj.get("realized", {})))


def calibrate_beta(r2: float, var_random: float, sigma2: float, n_active: int,
                   fixed_variance: Optional[float] = None) -> float:
    """Common fixed effect giving ``Var(fixed) / (Var(fixed) + var_random + sigma2) = r2``.

    ``Var(fixed) = beta^2 * V`` where ``V`` is ``fixed_variance`` (the sample
    variance of the unit-weight fixed signal) or ``n_active`` for independent
    unit-variance predictors.
    """
    if not 0 < r2 < 1:
        raise ParameterError(f"r2 must be in (0, 1), got {r2}")
    v = float(n_active) if fixed_variance is None else float(fixed_variance)
    other = var_random + sigma2
    if not (v > 0 and other > 0 and np.isfinite(v) and np.isfinite(other)):
        raise DataError("degenerate variance in effect-size calibration")
    return float(np.sqrt(r2 * other / ((1.0 - r2) * v)))


def gen_sim_data(cfg: SimConfig):
    """Draw ``(train, test, truth)``. The test set reuses the groups and their slopes."""
    rng = np.random.default_rng(cfg.seed)
    P, p, q, g = cfg.n_predictors, cfg.p, cfg.q, cfg.g
    active = np.sort(rng.choice(P, size=p, replace=False))
    kinds = rng.integers(0, len(TRANSFORMS), size=p) if cfg.effect == "nonlinear" else np.zeros(p, np.int64)
    b = rng.standard_normal((g, q))
    sigma2 = error_variance(cfg.icc)
    groups = np.repeat(np.arange(g), cfg.group_sizes())
    width = len(str(g))
    labels = tuple(f"g{i + 1:0{width}d}" for i in range(g))
    names = tuple(f"x{j + 1}" for j in range(P))

    def draw():
        X = rng.standard_normal((cfg.n, P))
        Xs = np.column_stack([transform(k, X[:, j]) for k, j in zip(kinds, active)])
        terms = Xs[:, :q] * b[groups]
        e = rng.normal(0.0, np.sqrt(sigma2), cfg.n)
        return X, Xs.sum(axis=1), terms, e

    X, fixed, terms, e = draw()
    Zb = terms.sum(axis=1)
    beta = calibrate_beta(cfg.r2, float(np.var(Zb)), sigma2, p, fixed_variance=float(np.var(fixed)))
    y = beta * fixed + Zb + e
    realized = {"var_fixed": float(np.var(beta * fixed)), "var_random": float(np.var(Zb)),
                "var_noise": float(np.var(e)), "var_random_terms": np.var(terms, axis=0).tolist()}
    train = Dataset(X, y, groups, names, (None,) * P, labels, "y", "id")
    Xt, fixed_t, terms_t, et = draw()
    test = Dataset(Xt, beta * fixed_t + terms_t.sum(axis=1) + et, groups, names, (None,) * P,
                   labels, "y", "id")
    truth = SimTruth(active, kinds, active[:q], beta, b, sigma2, realized)
    return train, test, truth


def realized_r2(truth: SimTruth) -> float:
    r = truth.realized
    return r["var_fixed"] / (r["var_fixed"] + r["var_random"] + r["var_noise"])


def realized_icc(truth: SimTruth) -> float:
    """Mean over random slopes of ``var(slope term) / (var(slope term) + var(noise))``."""
    terms = np.asarray(truth.realized["var_random_terms"])
    return float(np.mean(terms / (terms + truth.realized["var_noise"])))


def auc_variable_selection(scores, truth) -> float:
    """Probability that a random active predictor outscores a random inactive one (ties count half).

    ``truth`` is a boolean mask over predictors or a collection of active indices.
    """
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth)
    if truth.dtype == bool:
        mask = truth.copy()
    else:
        mask = np.zeros(scores.size, dtype=bool)
        mask[truth.astype(np.int64)] = True
    if mask.size != scores.size or scores.size < 2:
        raise ParameterError("scores and truth must cover the same P >= 2 predictors")
    n_pos = int(mask.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("AUC undefined when all or no predictors are active")
    ranks = rankdata(scores)
    return float((ranks[mask].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def default_grids() -> dict:
    return {
        METBOOST: TuneGrid(shrinkage=(0.025, 0.1), depth=(3, 5), min_node=(20,), n_trees=500, folds=3),
        BASELINE: TuneGrid(shrinkage=(0.01, 0.05), depth=(5, 10), min_node=(20,), n_trees=2000, folds=3),
    }


def _score(model, train: Dataset, test: Dataset, truth: SimTruth) -> tuple:
    """Test MSPE and selection AUC; the AUC is NaN when every predictor (or none) is active."""
    mspe = float(np.mean((test.y - predict(model, test)) ** 2))
    n_active = np.unique(np.asarray(truth.active, dtype=np.int64)).size
    if n_active in (0, train.p):
        return mspe, float("nan")
    infl = relative_influence(model, exclude_group=True)
    scores = np.array([infl.as_dict()[name] for name in train.names])
    return mspe, auc_variable_selection(scores, truth.active)


def _rep_task(args):
    ci, rep, cfg, methods, seed = args
    cfg = replace(cfg, seed=derive_seed(seed, ci, rep))
    train, test, truth = gen_sim_data(cfg)
    rows = []
    for label, (mode, grid) in methods.items():
        res = cv_tune(train, replace(grid, seed=derive_seed(cfg.seed, 1)), mode)
        mspe, auc = _score(res.model, train, test, truth)
        lam, depth, min_node = res.cells[res.best_cell]
        rows.append({"condition": ci, **{k: v for k, v in asdict(cfg).items() if k != "seed"},
                     "rep": rep, "seed": cfg.seed, "method": label, "mspe": mspe, "auc": auc,
                     "best_shrinkage": lam, "best_depth": depth, "best_min_node": min_node,
                     "best_m": res.best_m})
    return rows


def evaluate_dataset(train: Dataset, test: Dataset, truth: SimTruth, methods: Optional[dict] = None,
                     seed: int = 0) -> list:
    """Tune and score every method on one given train/test split."""
    methods = {k: (k, v) for k, v in default_grids().items()} if methods is None else methods
    rows = []
    for label, (mode, grid) in methods.items():
        res = cv_tune(train, replace(grid, seed=seed), mode)
        mspe, auc = _score(res.model, train, test, truth)
        lam, depth, min_node = res.cells[res.best_cell]
        rows.append({"condition": 0, "rep": 0, "method": label, "mspe": mspe, "auc": auc,
                     "best_shrinkage": lam, "best_depth": depth, "best_min_node": min_node,
                     "best_m": res.best_m})
    return rows


def percent_improvement(rows, treatment: str = METBOOST, control: str = BASELINE) -> list:
    """Per condition: mean percent improvement of ``treatment`` over ``control``.

    MSPE improvement is ``100 (control - treatment) / control``; AUC
    improvement is ``100 (treatment - control) / control``, averaged over
    the reps where it is defined.
    """
    by = {}
    for r in rows:
        by.setdefault((r["condition"], r["rep"]), {})[r["method"]] = r
    per_cond = {}
    for (ci, rep), methods in sorted(by.items()):
        if treatment not in methods or control not in methods:
            continue
        t, c = methods[treatment], methods[control]
        per_cond.setdefault(ci, []).append(
            (100.0 * (c["mspe"] - t["mspe"]) / c["mspe"], 100.0 * (t["auc"] - c["auc"]) / c["auc"]))
    out = []
    for ci, vals in per_cond.items():
        v = np.array(vals)
        auc = v[~np.isnan(v[:, 1]), 1]
        out.append({"condition": ci, "reps": len(vals),
                    "mspe_improvement": float(v[:, 0].mean()),
                    "auc_improvement": float(auc.mean()) if auc.size else float("nan"),
                    "mspe_positive": int((v[:, 0] > 0).sum()),
                    "auc_positive": int((v[:, 1] > 0).sum())})
    return out


def _write_rows(rows, path) -> None:
    if not rows:
        return
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def run_benchmark(conditions, reps: int, grids: Optional[dict] = None, methods: Optional[dict] = None,
                  seed: int = 0, cores: int = 1, out: Optional[str] = None,
                  summary_out: Optional[str] = None):
    """Run every condition ``reps`` times; returns ``(rows, summary)``.

    ``methods`` maps a label to ``(mode, TuneGrid)`` and defaults to the two
    modes with ``grids`` (or :func:`default_grids`). When ``out`` is given,
    results are rewritten after every finished replication.
    """
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    if methods is None:
        grids = default_grids() if grids is None else grids
        methods = {METBOOST: (METBOOST, grids[METBOOST]), BASELINE: (BASELINE, grids[BASELINE])}
    tasks = [(ci, rep, cfg, methods, seed) for ci, cfg in enumerate(conditions) for rep in range(reps)]
    rows = []
    if cores > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cores) as ex:
            for res in ex.map(_rep_task, tasks):
                rows.extend(res)
                if out:
                    _write_rows(rows, out)
    else:
        for t in tasks:
            rows.extend(_rep_task(t))
            if out:
                _write_rows(rows, out)
    labels = list(methods)
    summary = percent_improvement(rows, labels[0], labels[1]) if len(labels) >= 2 else []
    if summary_out:
        _write_rows(summary, summary_out)
    return rows, summary


def load_conditions(path) -> list:
    """Conditions from a JSON list of objects or a CSV with SimConfig field names as header."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        items = json.loads(text)
    else:
        items = list(csv.DictReader(text.splitlines()))
    types = {"effect": str, "icc": float, "r2": float, "active_fraction": float}
    conds = []
    for item in items:
        kw = {}
        for k, v in item.items():
            if v in ("", None):
                continue
            kw[k] = types.get(k, int)(v)
        conds.append(SimConfig(**kw))
    return conds
