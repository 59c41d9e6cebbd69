"""Clustered tabular data: CSV ingestion, fold construction and stratified subsampling.

Predictors live in one float matrix. Missing cells are NaN; categorical
columns hold integer level codes into a per-column level registry.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, EmptyInputError, ParameterError, SchemaError


def _sort_labels(labels):
    # numeric-looking labels sort numerically, otherwise lexicographically
    try:
        return sorted(labels, key=lambda s: (float(s), s))
    except ValueError:
        return sorted(labels)


@dataclass(frozen=True)
class Dataset:
    """Immutable clustered regression data.

    ``levels[j]`` is ``None`` for a continuous column and the tuple of level
    labels for a categorical one. ``groups`` holds codes into ``group_labels``.
    """

    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray
    names: tuple
    levels: tuple
    group_labels: tuple
    outcome_name: str = "y"
    id_name: str = "id"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.y, dtype=float).ravel()
        groups = np.asarray(self.groups, dtype=np.int64).ravel()
        if X.shape[0] != y.shape[0] or groups.shape[0] != y.shape[0]:
            raise SchemaError("X, y and groups must have the same number of rows")
        if y.shape[0] == 0:
            raise EmptyInputError("dataset has zero rows")
        if not np.all(np.isfinite(y)):
            bad = int(np.flatnonzero(~np.isfinite(y))[0])
            raise DataError(f"outcome is missing or non-finite at row {bad}")
        names = tuple(str(n) for n in self.names)
        if len(names) != X.shape[1]:
            raise SchemaError(f"{len(names)} names for {X.shape[1]} predictor columns")
        if len(set(names)) != len(names):
            raise SchemaError("predictor names must be unique")
        if self.id_name in names:
            raise SchemaError(f"group column {self.id_name!r} is also a predictor")
        levels = tuple(None if lv is None else tuple(str(v) for v in lv) for lv in self.levels)
        if len(levels) != X.shape[1]:
            raise SchemaError("one level registry entry is required per predictor")
        group_labels = tuple(str(v) for v in self.group_labels)
        if len(group_labels) == 0 or groups.min() < 0 or groups.max() >= len(group_labels):
            raise SchemaError("group codes must index group_labels")
        for j, lv in enumerate(levels):
            if lv is None:
                continue
            col = X[:, j]
            obs = col[~np.isnan(col)]
            if obs.size and (obs.min() < 0 or obs.max() >= len(lv) or np.any(obs != np.round(obs))):
                raise SchemaError(f"categorical column {names[j]!r} holds invalid level codes")
        for attr, val in (("X", X), ("y", y), ("groups", groups)):
            val.setflags(write=False)
            object.__setattr__(self, attr, val)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "group_labels", group_labels)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def g(self) -> int:
        return len(self.group_labels)

    @property
    def categorical(self) -> np.ndarray:
        return np.array([lv is not None for lv in self.levels], dtype=bool)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.groups, minlength=self.g)

    def take(self, rows) -> "Dataset":
        """Row subset; the group registry is kept so codes stay comparable."""
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.groups[rows], self.names,
                       self.levels, self.group_labels, self.outcome_name, self.id_name)

    def column(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ParameterError(f"unknown predictor {name!r}") from None


def _parse_float(s: str) -> Optional[float]:
    try:
        v = float(s)
    except ValueError:
        return None
    return v


def load_csv(path, outcome: str, id: str, na_token: str = "NA",
             require_outcome: bool = True) -> Dataset:
    """Read a header-first CSV into a :class:`Dataset`.

    Columns whose non-missing cells all parse as numbers become continuous;
    anything else is categorical. Empty cells and ``na_token`` are missing.
    With ``require_outcome=False`` an absent outcome column is filled with
    zeros (used for prediction inputs).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: no header row") from None
        rows = [r for r in reader if r]
    header = [h.strip() for h in header]
    if id not in header:
        raise SchemaError(f"{path}: group column {id!r} not found")
    has_outcome = outcome in header
    if require_outcome and not has_outcome:
        raise SchemaError(f"{path}: outcome column {outcome!r} not found")
    if not rows:
        raise EmptyInputError(f"{path}: zero data rows")
    ncol = len(header)
    for i, r in enumerate(rows):
        if len(r) != ncol:
            raise DataError(f"{path}: row {i} has {len(r)} fields, expected {ncol}")
    cols = list(zip(*rows))

    def missing(cell):
        return cell == "" or cell == na_token

    y = np.zeros(len(rows))
    if has_outcome:
        for i, cell in enumerate(cols[header.index(outcome)]):
            v = None if missing(cell) else _parse_float(cell)
            if v is None or not math.isfinite(v):
                raise DataError(f"{path}: outcome {outcome!r} missing or non-numeric at row {i}")
            y[i] = v

    gcol = cols[header.index(id)]
    if any(missing(c) for c in gcol):
        bad = next(i for i, c in enumerate(gcol) if missing(c))
        raise DataError(f"{path}: group id missing at row {bad}")
    group_labels = tuple(_sort_labels(set(gcol)))
    gindex = {lab: k for k, lab in enumerate(group_labels)}
    groups = np.array([gindex[c] for c in gcol], dtype=np.int64)

    names, levels, columns = [], [], []
    for name, cells in zip(header, cols):
        if name in (outcome, id):
            continue
        parsed = [None if missing(c) else _parse_float(c) for c in cells]
        numeric = all(v is not None for v, c in zip(parsed, cells) if not missing(c))
        if numeric:
            columns.append(np.array([np.nan if v is None else v for v in parsed]))
            levels.append(None)
        else:
            labs = tuple(_sort_labels({c for c in cells if not missing(c)}))
            idx = {lab: k for k, lab in enumerate(labs)}
            columns.append(np.array([np.nan if missing(c) else idx[c] for c in cells], dtype=float))
            levels.append(labs)
        names.append(name)
    X = np.column_stack(columns) if columns else np.zeros((len(rows), 0))
    return Dataset(X, y, groups, tuple(names), tuple(levels), group_labels, outcome, id)


def write_csv(d: Dataset, path, na_token: str = "NA") -> None:
    """Inverse of :func:`load_csv`; floats are written with ``repr`` so values round-trip."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([d.outcome_name, d.id_name, *d.names])
        for i in range(d.n):
            row = [repr(float(d.y[i])), d.group_labels[d.groups[i]]]
            for j, lv in enumerate(d.levels):
                v = d.X[i, j]
                if np.isnan(v):
                    row.append(na_token)
                elif lv is None:
                    row.append(repr(float(v)))
                else:
                    row.append(lv[int(v)])
            w.writerow(row)


@dataclass(frozen=True)
class FoldAssignment:
    fold: np.ndarray  # 0-based fold index per row
    k: int
    seed: int

    def test_rows(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.fold == f)

    def train_rows(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.fold != f)


def make_folds(d: Dataset, K: int, seed: int) -> FoldAssignment:
    """Group-stratified K-fold assignment.

    Rows of each group are shuffled and dealt round-robin; the dealing
    position carries over between groups so fold sizes differ by at most one.
    """
    if not 2 <= K <= d.n:
        raise ParameterError(f"K must be in [2, {d.n}], got {K}")
    rng = np.random.default_rng(seed)
    fold = np.empty(d.n, dtype=np.int64)
    pos = 0
    for gi in range(d.g):
        rows = np.flatnonzero(d.groups == gi)
        if rows.size == 0:
            continue
        rows = rng.permutation(rows)
        fold[rows] = (pos + np.arange(rows.size)) % K
        pos += rows.size
    fold.setflags(write=False)
    return FoldAssignment(fold, K, seed)


def subsample(groups: np.ndarray, fraction: float, rng: np.random.Generator,
              n_groups: Optional[int] = None) -> np.ndarray:
    """Stratified sample without replacement: ``max(1, round(fraction * n_i))`` rows per group.

    ``groups`` is a vector of group codes (``Dataset.groups``). Returns sorted
    row indices. ``fraction == 1`` returns every row without consuming
    randomness.
    """
    if not 0 < fraction <= 1:
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    groups = np.asarray(groups)
    if fraction == 1:
        return np.arange(groups.shape[0])
    n_groups = int(groups.max()) + 1 if n_groups is None else n_groups
    order = np.argsort(groups, kind="stable")
    sizes = np.bincount(groups, minlength=n_groups)
    take = np.maximum(1, np.floor(fraction * sizes + 0.5)).astype(np.int64)
    take[sizes == 0] = 0
    # a random key per row, ranked within its group, picks take[g] rows per group
    keys = rng.random(groups.shape[0])
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    sorted_groups = groups[order]
    within = np.lexsort((keys[order], sorted_groups))
    ranked = order[within]
    rank_in_group = np.arange(groups.shape[0]) - starts[sorted_groups]
    chosen = ranked[rank_in_group < take[sorted_groups]]
    return np.sort(chosen)
