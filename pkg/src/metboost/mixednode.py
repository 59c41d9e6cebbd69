"""Per-node random-effect fits for one boosting stage.

Each terminal node j carries a fixed mean beta_j and per-group deviations
b_ij with variance sigma2_alpha_j, within-cell error variance sigma2_j.
Because the node and cell indicator columns are disjoint, the stage's
mixed model splits into independent one-way random-effects problems, one
per node, each solved in closed form. :func:`solve_henderson` solves the
same system densely and serves as the cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, RankError
from .nodedesign import NodeAssignment


@dataclass(frozen=True)
class VarianceComponents:
    between: float  # sigma2_alpha
    within: float   # sigma2


@dataclass(frozen=True)
class MixedTreeFit:
    beta: np.ndarray     # (k,)
    b: np.ndarray        # (k, g); zero in unoccupied cells
    between: np.ndarray  # (k,) sigma2_alpha per node
    within: np.ndarray   # (k,) sigma2 per node
    omega: np.ndarray    # (k, g) shrinkage weight per cell; zero in unoccupied cells

    def fitted(self, a: NodeAssignment) -> np.ndarray:
        return self.beta[a.node] + self.b[a.node, a.group]


def variance_floor(r) -> float:
    return 1e-8 * float(np.var(r)) + 1e-12


def shrinkage_weight(between, within, n):
    """``between / (between + within / n)``; zero where ``n == 0``. Broadcasts."""
    between = np.asarray(between, dtype=float)
    within = np.asarray(within, dtype=float)
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = between / (between + within / n)
    w = np.where(n > 0, w, 0.0)
    w = np.where(between > 0, w, 0.0)
    return w if w.ndim else float(w)


def _components(counts, means, ssw, floor):
    """Unbalanced one-way ANOVA moment estimates, vectorised over nodes (rows)."""
    counts = np.atleast_2d(counts).astype(float)
    means = np.atleast_2d(means)
    ssw = np.atleast_2d(ssw)
    occupied = counts > 0
    N = counts.sum(axis=1)
    gj = occupied.sum(axis=1)
    if np.any(N == 0):
        raise DataError("cannot estimate variance components of an empty node")
    SSW = np.where(occupied, ssw, 0.0).sum(axis=1)
    grand = np.where(occupied, counts * means, 0.0).sum(axis=1) / N
    SSB = np.where(occupied, counts * (means - grand[:, None]) ** 2, 0.0).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        within = np.where(N > gj, SSW / (N - gj), 0.0)
        msb = SSB / (gj - 1)
        n0 = (N - (counts ** 2).sum(axis=1) / N) / (gj - 1)
        between = np.maximum(0.0, (msb - np.maximum(within, floor)) / n0)
    degenerate = (gj <= 1) | (N == gj)
    between = np.where(degenerate, 0.0, between)
    within = np.maximum(within, floor)
    return between, within


def estimate_components(counts, means, ssw, floor: float = 1e-12) -> VarianceComponents:
    """Method-of-moments variance components for one node.

    ``counts``, ``means`` and ``ssw`` are per-group row counts, response means
    and within-group sums of squares; groups with zero count are ignored.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.sum() <= 0:
        raise DataError("cannot estimate variance components of an empty node")
    between, within = _components(counts, np.asarray(means, float), np.asarray(ssw, float), floor)
    return VarianceComponents(float(between[0]), float(within[0]))


def cell_statistics(a: NodeAssignment, r):
    """Per-cell ``(counts, means, ssw)``, each ``(k, g)``."""
    r = np.asarray(r, dtype=float)
    kg = a.k * a.g
    cell = a.cell
    counts = np.bincount(cell, minlength=kg)
    sums = np.bincount(cell, weights=r, minlength=kg)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / counts, 0.0)
    dev = r - means[cell]
    ssw = np.bincount(cell, weights=dev * dev, minlength=kg)
    shape = (a.k, a.g)
    return counts.reshape(shape), means.reshape(shape), ssw.reshape(shape)


def fit_mixed_tree(a: NodeAssignment, r, floor: Optional[float] = None,
                   between: Optional[np.ndarray] = None,
                   within: Optional[np.ndarray] = None) -> MixedTreeFit:
    """Closed-form BLUP fit of ``r = X_tilde beta + Z_tilde b + e``.

    Variance components are estimated per node unless ``between`` /
    ``within`` are supplied (length-k arrays), which plugs them in.
    """
    r = np.asarray(r, dtype=float)
    if r.shape[0] != a.n:
        raise DataError("residuals and assignment must align")
    floor = variance_floor(r) if floor is None else floor
    counts, means, ssw = cell_statistics(a, r)
    node_n = counts.sum(axis=1)
    if np.any(node_n == 0):
        raise DataError("every terminal node needs at least one row")
    est_between, est_within = _components(counts, means, ssw, floor)
    between = est_between if between is None else np.asarray(between, dtype=float)
    within = est_within if within is None else np.asarray(within, dtype=float)

    # plain node mean where there is no between-group variance
    plain = np.bincount(a.node, weights=r, minlength=a.k) / node_n
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(counts > 0, 1.0 / (between[:, None] + within[:, None] / counts), 0.0)
        weighted = (w * means).sum(axis=1) / w.sum(axis=1)
    beta = np.where(between > 0, weighted, plain)
    omega = shrinkage_weight(between[:, None], within[:, None], counts)
    b = np.where(counts > 0, omega * (means - beta[:, None]), 0.0)
    return MixedTreeFit(beta, b, between, within, omega)


def solve_henderson(Xt, Zt, psi, sigma2, r, form: str = "standard"):
    """Solve Henderson's mixed model equations densely for ``(beta, b)``.

    ``form="standard"`` uses the lower-right block ``Z'Z + sigma2 * psi^-1``,
    written as ``[[X'X, X'Z psi], [Z'X, Z'Z psi + sigma2 I]] [beta; c] = [X'r; Z'r]``
    with ``b = psi c`` so a singular ``psi`` (zero variance) is allowed.
    ``form="printed"`` uses ``Z'Z + psi`` literally.
    """
    Xt = np.asarray(Xt, dtype=float)
    Zt = np.asarray(Zt, dtype=float)
    psi = np.asarray(psi, dtype=float)
    r = np.asarray(r, dtype=float)
    p, q = Xt.shape[1], Zt.shape[1]
    if psi.ndim == 1:
        psi = np.diag(psi)
    XtX, XtZ, ZtZ = Xt.T @ Xt, Xt.T @ Zt, Zt.T @ Zt
    rhs = np.concatenate([Xt.T @ r, Zt.T @ r])
    if form == "standard":
        A = np.block([[XtX, XtZ @ psi], [XtZ.T, ZtZ @ psi + sigma2 * np.eye(q)]])
    elif form == "printed":
        A = np.block([[XtX, XtZ], [XtZ.T, ZtZ + psi]])
    else:
        raise ValueError(f"unknown form {form!r}")
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankError(f"Henderson system is singular: {exc}") from None
    if not np.all(np.isfinite(sol)):
        raise RankError("Henderson system is singular")
    beta, c = sol[:p], sol[p:]
    b = psi @ c if form == "standard" else c
    return beta, b
