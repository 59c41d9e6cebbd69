"""K-fold grid search over (step size, depth, min node size) with stage-count selection."""

from __future__ import annotations

import csv
import itertools
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset, make_folds
from .ensemble import METBOOST, MODES, BoostModel, BoostParams, boost
from .errors import ParameterError, TuningError


@dataclass(frozen=True)
class TuneGrid:
    shrinkage: tuple = (0.01,)
    depth: tuple = (3,)
    min_node: tuple = (20,)
    n_trees: int = 1000
    folds: int = 3
    seed: int = 0
    bag_fraction: float = 0.5
    n_surrogates: int = 5

    def __post_init__(self):
        for name in ("shrinkage", "depth", "min_node"):
            val = tuple(getattr(self, name))
            if not val:
                raise ParameterError(f"grid list {name!r} is empty")
            object.__setattr__(self, name, val)
        if self.folds < 2:
            raise ParameterError("folds must be >= 2")
        if self.n_trees < 1:
            raise ParameterError("n_trees must be >= 1")

    def cells(self) -> list:
        """Grid cells as ``(shrinkage, depth, min_node)`` tuples, shrinkage varying slowest."""
        return list(itertools.product(self.shrinkage, self.depth, self.min_node))

    def params(self, cell, seed: int, n_trees: Optional[int] = None) -> BoostParams:
        lam, depth, min_node = cell
        return BoostParams(n_trees=self.n_trees if n_trees is None else n_trees, shrinkage=lam,
                           depth=depth, min_node=min_node, n_surrogates=self.n_surrogates,
                           bag_fraction=self.bag_fraction, seed=seed)


@dataclass
class TuneResult:
    cells: list
    curves: np.ndarray     # (n_cells, n_trees) mean held-out MSE after stage m = 1..M
    fold_curves: np.ndarray  # (n_cells, K, n_trees)
    best_cell: int
    best_m: int
    model: BoostModel
    mode: str = METBOOST

    @property
    def best_error(self) -> float:
        return float(self.curves[self.best_cell, self.best_m - 1])

    def report_rows(self):
        for c, (lam, depth, min_node) in enumerate(self.cells):
            for m in range(self.curves.shape[1]):
                yield c, lam, depth, min_node, m + 1, float(self.curves[c, m])


def derive_seed(*key: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


def _fold_task(args):
    d, grid, mode, c, cell, f, train, test, seed = args
    try:
        model = boost(d.take(train), grid.params(cell, seed), mode, valid=d.take(test))
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise TuningError(f"fit failed for cell {c} {cell} in fold {f}: {exc}") from exc
    return c, f, model.history["valid_mse"]


def select_best(curves: np.ndarray, cells) -> tuple:
    """Argmin over (cell, m); exact ties go to smaller m, then depth, then step size, then cell order."""
    best = np.min(curves)
    hits = np.argwhere(curves == best)
    key = min((m + 1, cells[c][1], cells[c][0], c) for c, m in hits)
    return int(key[3]), int(key[0])


def cv_tune(d: Dataset, grid: TuneGrid, mode: str = METBOOST, cores: int = 1) -> TuneResult:
    """Cross-validate every grid cell, pick the best (cell, stage count) and refit on all rows.

    Every cell sees the same folds and, within a fold, the same subsample
    stream (seeded from the master seed and fold index), so cells are
    compared on common random numbers.
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")
    folds = make_folds(d, grid.folds, grid.seed)
    for f in range(grid.folds):
        missing = d.g - np.unique(d.groups[folds.train_rows(f)]).size
        if missing:
            warnings.warn(f"training fold {f} lacks {missing} of {d.g} groups", stacklevel=2)
    cells = grid.cells()
    tasks = [(d, grid, mode, c, cell, f, folds.train_rows(f), folds.test_rows(f),
              derive_seed(grid.seed, f))
             for c, cell in enumerate(cells) for f in range(grid.folds)]
    fold_curves = np.empty((len(cells), grid.folds, grid.n_trees))
    if cores > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cores) as ex:
            results = list(ex.map(_fold_task, tasks))
    else:
        results = [_fold_task(t) for t in tasks]
    for c, f, curve in results:
        fold_curves[c, f] = curve
    curves = fold_curves.mean(axis=1)
    best_cell, best_m = select_best(curves, cells)
    final = boost(d, grid.params(cells[best_cell], derive_seed(grid.seed, grid.folds), best_m), mode)
    return TuneResult(cells, curves, fold_curves, best_cell, best_m, final, mode)


def write_report(result: TuneResult, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", "shrinkage", "depth", "min_node", "m", "mean_cv_mse"])
        for c, lam, depth, min_node, m, err in result.report_rows():
            w.writerow([c, repr(float(lam)), depth, min_node, m, repr(err)])
