"""Stagewise boosting: plain gradient-boosted trees and mixed-effects boosting.

Both modes start from the training mean and fit each stage to the current
residuals on a group-stratified subsample. The baseline adds the grouping
variable as an ordinary categorical predictor; ``metboost`` keeps it out of
the trees and instead lets every terminal-node mean vary by group through
shrunken random effects.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import Dataset, subsample
from .errors import ParameterError, SchemaError
from .mixednode import fit_mixed_tree
from .nodedesign import NodeAssignment
from .tree import Tree, TreeParams, fit_tree

BASELINE = "baseline"
METBOOST = "metboost"
MODES = (BASELINE, METBOOST)


@dataclass(frozen=True)
class BoostParams:
    n_trees: int = 2500
    shrinkage: float = 0.01
    depth: int = 3
    min_node: int = 20
    n_surrogates: int = 5
    bag_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ParameterError("n_trees must be >= 1")
        if not 0 < self.shrinkage <= 1:
            raise ParameterError("shrinkage must be in (0, 1]")
        if not 0 < self.bag_fraction <= 1:
            raise ParameterError("bag_fraction must be in (0, 1]")
        TreeParams(self.depth, self.min_node, self.n_surrogates)

    @property
    def tree_params(self) -> TreeParams:
        return TreeParams(self.depth, self.min_node, self.n_surrogates)


@dataclass
class Stage:
    tree: Tree
    beta: np.ndarray                 # (k,) fixed node means
    b: Optional[np.ndarray] = None   # (k, g) group deviations, metboost only
    between: Optional[np.ndarray] = None
    within: Optional[np.ndarray] = None


@dataclass
class BoostModel:
    mode: str
    init: float
    shrinkage: float
    stages: list
    names: tuple            # predictors seen by the trees
    levels: tuple
    group_labels: tuple
    params: BoostParams
    id_name: str = "id"
    outcome_name: str = "y"
    group_column: int = -1  # index of the injected group predictor (baseline), else -1
    history: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def categorical(self) -> np.ndarray:
        return np.array([lv is not None for lv in self.levels], dtype=bool)

    def truncate(self, m: int) -> "BoostModel":
        if not 0 <= m <= self.n_stages:
            raise ParameterError(f"m must be in [0, {self.n_stages}]")
        return replace(self, stages=self.stages[:m], history={})

    def stage_gains(self) -> np.ndarray:
        """``(n_stages, n_predictors)`` SSE reductions by stage and predictor."""
        out = np.zeros((self.n_stages, len(self.names)))
        for m, st in enumerate(self.stages):
            out[m] = st.tree.feature_gains()
        return out


def _design(d: Dataset, mode: str, include_group: bool):
    X, cat = d.X, d.categorical
    names, levels = d.names, d.levels
    group_column = -1
    if mode == BASELINE and include_group:
        X = np.column_stack([X, d.groups.astype(float)])
        cat = np.append(cat, True)
        names = names + (d.id_name,)
        levels = levels + (d.group_labels,)
        group_column = len(names) - 1
    return np.asfortranarray(X, dtype=float), cat, names, levels, group_column


def encode(model: BoostModel, d: Dataset):
    """Map ``d`` onto the model's predictor layout and registries.

    Returns ``(X, group_codes)``; unseen categorical levels become missing and
    unseen groups get code -1.
    """
    gmap = {lab: i for i, lab in enumerate(model.group_labels)}
    gcodes = np.array([gmap.get(d.group_labels[c], -1) for c in d.groups], dtype=np.int64)
    cols = []
    for j, (name, lv) in enumerate(zip(model.names, model.levels)):
        if j == model.group_column:
            cols.append(np.where(gcodes >= 0, gcodes, np.nan).astype(float))
            continue
        if name not in d.names:
            raise SchemaError(f"predictor {name!r} missing from input data")
        src = d.names.index(name)
        col = d.X[:, src]
        src_lv = d.levels[src]
        if lv is None:
            if src_lv is not None:
                raise SchemaError(f"predictor {name!r} is continuous in the model but categorical in the data")
            cols.append(col.astype(float))
            continue
        index = {lab: i for i, lab in enumerate(lv)}
        if src_lv is None:
            def label(v):
                return str(int(v)) if float(v).is_integer() else repr(float(v))
            mapped = [np.nan if np.isnan(v) else index.get(label(v), np.nan) for v in col]
        else:
            remap = np.array([index.get(lab, np.nan) for lab in src_lv] + [np.nan])
            codes = np.where(np.isnan(col), len(src_lv), col).astype(np.int64)
            mapped = remap[codes]
        cols.append(np.asarray(mapped, dtype=float))
    X = np.column_stack(cols) if cols else np.zeros((d.n, 0))
    return np.asfortranarray(X), gcodes


def _stage_values(st: Stage, leaf, gcodes):
    fixed = st.beta[leaf]
    if st.b is None:
        return fixed, np.zeros_like(fixed)
    rand = np.zeros_like(fixed)
    known = gcodes >= 0
    rand[known] = st.b[leaf[known], gcodes[known]]
    return fixed, rand


def boost(d: Dataset, params: BoostParams, mode: str = METBOOST, *,
          include_group: bool = True, random_effects: bool = True,
          valid: Optional[Dataset] = None) -> BoostModel:
    """Fit a boosted ensemble.

    ``include_group`` (baseline only) offers the grouping variable to the
    trees. ``random_effects=False`` (metboost only) pins every between-group
    variance at zero. When ``valid`` is given, held-out MSE after each stage
    is recorded in ``model.history["valid_mse"]``; training MSE is always
    recorded in ``model.history["train_mse"]``.
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")
    X, cat, names, levels, group_column = _design(d, mode, include_group)
    groups, g = d.groups, d.g
    tp = params.tree_params
    rng = np.random.default_rng(params.seed)
    lam = params.shrinkage
    init = float(np.mean(d.y))
    r = d.y - init
    model = BoostModel(mode, init, lam, [], names, levels, d.group_labels, params,
                       d.id_name, d.outcome_name, group_column)
    train_mse = np.empty(params.n_trees)
    if valid is not None:
        Xv, gv = encode(model, valid)
        resid_v = valid.y - init
        valid_mse = np.empty(params.n_trees)
    for m in range(params.n_trees):
        rows = subsample(groups, params.bag_fraction, rng, g)
        tree = fit_tree(X, r, rows, tp, cat)
        leaf = tree.apply(X)
        if mode == METBOOST:
            a = NodeAssignment(leaf[rows], groups[rows], tree.n_leaves, g)
            between = None if random_effects else np.zeros(tree.n_leaves)
            fit = fit_mixed_tree(a, r[rows], between=between)
            st = Stage(tree, fit.beta, fit.b, fit.between, fit.within)
            step = fit.beta[leaf] + fit.b[leaf, groups]
        else:
            st = Stage(tree, tree.leaf_values)
            step = st.beta[leaf]
        r = r - lam * step
        model.stages.append(st)
        train_mse[m] = np.mean(r * r)
        if valid is not None:
            fv, rv = _stage_values(st, tree.apply(Xv), gv)
            resid_v = resid_v - lam * (fv + rv)
            valid_mse[m] = np.mean(resid_v * resid_v)
    model.history["train_mse"] = train_mse
    if valid is not None:
        model.history["valid_mse"] = valid_mse
    return model


def boost_baseline(d: Dataset, params: BoostParams, include_group: bool = True, **kw) -> BoostModel:
    return boost(d, params, BASELINE, include_group=include_group, **kw)


def boost_metboost(d: Dataset, params: BoostParams, **kw) -> BoostModel:
    return boost(d, params, METBOOST, **kw)


def predict_parts(model: BoostModel, d: Dataset, m: Optional[int] = None):
    """``(fixed, random)`` contributions, each already scaled by the step size.

    The prediction is ``model.init + fixed + random``. Rows from groups not
    seen in training get no random contribution.
    """
    m = model.n_stages if m is None else m
    if not 0 <= m <= model.n_stages:
        raise ParameterError(f"m must be in [0, {model.n_stages}], got {m}")
    X, gcodes = encode(model, d)
    fixed = np.zeros(d.n)
    rand = np.zeros(d.n)
    for st in model.stages[:m]:
        f, rr = _stage_values(st, st.tree.apply(X), gcodes)
        fixed += model.shrinkage * f
        rand += model.shrinkage * rr
    return fixed, rand


def predict(model: BoostModel, d: Dataset, m: Optional[int] = None) -> np.ndarray:
    fixed, rand = predict_parts(model, d, m)
    return model.init + fixed + rand


def predict_path(model: BoostModel, d: Dataset) -> np.ndarray:
    """Predictions after every stage: ``(n_stages + 1, N)``, row 0 is the constant start."""
    X, gcodes = encode(model, d)
    out = np.empty((model.n_stages + 1, d.n))
    cur = np.full(d.n, model.init)
    out[0] = cur
    for m, st in enumerate(model.stages, start=1):
        f, rr = _stage_values(st, st.tree.apply(X), gcodes)
        cur = cur + model.shrinkage * (f + rr)
        out[m] = cur
    return out
