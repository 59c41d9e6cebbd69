"""Relative influence, per-group marginal effect tables and prediction variance shares."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .data import Dataset
from .ensemble import METBOOST, BoostModel, predict, predict_parts
from .errors import ParameterError, UnsupportedModeError


@dataclass(frozen=True)
class InfluenceReport:
    names: tuple
    scores: np.ndarray   # percent, sums to 100 unless the model has no splits
    raw: np.ndarray      # summed SSE reductions
    excluded: Optional[str] = None

    def ranking(self) -> list:
        order = sorted(range(len(self.names)), key=lambda j: (-self.scores[j], j))
        return [self.names[j] for j in order]

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.scores.tolist()))


def relative_influence(model: BoostModel, exclude_group: bool = False) -> InfluenceReport:
    """Per-predictor share of the SSE reduction achieved by all tree splits.

    With ``exclude_group`` the grouping variable of a baseline model is
    zeroed before normalising; metboost models never split on it.
    """
    raw = model.stage_gains().sum(axis=0)
    kept = raw.copy()
    excluded = None
    if exclude_group and model.group_column >= 0:
        kept[model.group_column] = 0.0
        excluded = model.names[model.group_column]
    total = kept.sum()
    scores = 100.0 * kept / total if total > 0 else np.zeros_like(kept)
    return InfluenceReport(model.names, scores, raw, excluded)


def marginal_effects(model: BoostModel, d: Dataset, predictor: str,
                     groups: Optional[Iterable[str]] = None, m: Optional[int] = None) -> dict:
    """Model predictions against one predictor at the observed rows.

    Returns columns ``group``, ``x`` and ``yhat`` sorted by group label then
    ``x``; rows missing ``predictor`` are dropped.
    """
    j = d.column(predictor)
    rows = np.arange(d.n)
    if groups is not None:
        wanted = list(groups)
        unknown = [gl for gl in wanted if gl not in d.group_labels]
        if unknown:
            raise ParameterError(f"unknown group label(s) {unknown}")
        codes = [d.group_labels.index(gl) for gl in wanted]
        rows = np.flatnonzero(np.isin(d.groups, codes))
    x = d.X[rows, j]
    keep = ~np.isnan(x)
    rows, x = rows[keep], x[keep]
    yhat = predict(model, d.take(rows), m) if rows.size else np.empty(0)
    labels = np.array([d.group_labels[c] for c in d.groups[rows]], dtype=object)
    order = sorted(range(rows.size), key=lambda i: (d.groups[rows[i]], x[i], rows[i]))
    return {"group": labels[order].tolist() if rows.size else [],
            "x": x[order], "yhat": yhat[order] if rows.size else yhat}


def variance_decomposition(model: BoostModel, d: Dataset) -> float:
    """Share of prediction variance due to the group-specific part of a metboost model."""
    if model.mode != METBOOST:
        raise UnsupportedModeError("variance decomposition needs a metboost model")
    fixed, rand = predict_parts(model, d)
    total = np.var(fixed + rand)
    return float(np.var(rand) / total) if total > 0 else 0.0


def write_influence(report: InfluenceReport, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predictor", "score"])
        for name, s in zip(report.names, report.scores):
            w.writerow([name, repr(float(s))])


def write_margins(table: dict, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "x", "yhat"])
        for gl, x, yh in zip(table["group"], table["x"], table["yhat"]):
            w.writerow([gl, repr(float(x)), repr(float(yh))])
