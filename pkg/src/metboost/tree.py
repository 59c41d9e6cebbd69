"""Least-squares CART regression trees with surrogate splits.

Trees are grown greedily to a maximum path depth. Each internal node keeps
an ordered list of surrogate rules used to route rows whose splitting value
is missing, with the node's majority direction as the last resort.
Terminal nodes are numbered ``0..k-1`` in depth-first, left-first order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DataError, ParameterError

# Candidates whose gain lies within TIE_RTOL * SSE(node) of the best are ties.
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class TreeParams:
    depth: int = 3
    min_node: int = 20
    n_surrogates: int = 5

    def __post_init__(self):
        if self.depth < 1 or self.min_node < 1 or self.n_surrogates < 0:
            raise ParameterError(f"invalid tree parameters {self}")


@dataclass(frozen=True)
class SplitRule:
    """Routing rule on one predictor.

    Continuous rules send ``x < threshold`` left (``x >= threshold`` when
    ``reverse``). Categorical rules send ``left_levels`` left; levels outside
    ``known_levels`` are treated as missing.
    """

    feature: int
    threshold: float = math.nan
    reverse: bool = False
    left_levels: tuple = ()
    known_levels: tuple = ()

    def __post_init__(self):
        if self.known_levels:
            # level code -> 0 unknown, 1 left, 2 right; the extra last slot catches everything else
            lut = np.zeros(max(self.known_levels) + 2, dtype=np.int8)
            lut[list(self.known_levels)] = 2
            lut[list(self.left_levels)] = 1
            object.__setattr__(self, "_lut", lut)

    @property
    def categorical(self) -> bool:
        return len(self.known_levels) > 0

    def route(self, col: np.ndarray):
        """Return ``(observed, goes_left)`` masks for a column of values."""
        if self.categorical:
            top = self._lut.size - 1
            ok = (col >= 0) & (col < top)  # False for NaN
            code = self._lut[np.where(ok, col, top).astype(np.int64)]
            obs = code > 0
            left = code == 1
        else:
            obs = ~np.isnan(col)
            left = (col >= self.threshold) if self.reverse else (col < self.threshold)
            left &= obs
        return obs, left


@dataclass
class Node:
    rule: Optional[SplitRule] = None
    surrogates: list = field(default_factory=list)
    agreements: list = field(default_factory=list)
    default_left: bool = True
    left: int = -1
    right: int = -1
    gain: float = 0.0
    leaf: int = -1
    value: float = 0.0
    count: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.rule is None

    def go_left(self, Xsub: np.ndarray) -> np.ndarray:
        obs, left = self.rule.route(Xsub[:, self.rule.feature])
        pending = ~obs
        for s in self.surrogates:
            if not pending.any():
                break
            idx = np.flatnonzero(pending)
            sobs, sleft = s.route(Xsub[idx, s.feature])
            hit = idx[sobs]
            left[hit] = sleft[sobs]
            pending[hit] = False
        if pending.any():
            left[pending] = self.default_left
        return left


@dataclass
class Tree:
    nodes: list
    n_features: int
    _flat: Optional[tuple] = field(default=None, init=False, repr=False, compare=False)

    @property
    def n_leaves(self) -> int:
        return sum(1 for nd in self.nodes if nd.is_leaf)

    @property
    def leaf_values(self) -> np.ndarray:
        vals = np.empty(self.n_leaves)
        for nd in self.nodes:
            if nd.is_leaf:
                vals[nd.leaf] = nd.value
        return vals

    @property
    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            i, d = stack.pop()
            nd = self.nodes[i]
            if nd.is_leaf:
                best = max(best, d)
            else:
                stack += [(nd.left, d + 1), (nd.right, d + 1)]
        return best

    def _flatten(self):
        ptr, leaf, left, right, dleft = [0], [], [], [], []
        feat, is_cat, thr, rev, lut_off, lut_len, luts = [], [], [], [], [], [], []
        off = 0
        for nd in self.nodes:
            leaf.append(nd.leaf if nd.is_leaf else -1)
            left.append(nd.left)
            right.append(nd.right)
            dleft.append(nd.default_left)
            rules = [] if nd.is_leaf else [nd.rule, *nd.surrogates]
            for rule in rules:
                feat.append(rule.feature)
                is_cat.append(rule.categorical)
                thr.append(rule.threshold)
                rev.append(rule.reverse)
                size = rule._lut.size - 1 if rule.categorical else 0
                lut_off.append(off)
                lut_len.append(size)
                if size:
                    luts.append(rule._lut[:size])
                off += size
            ptr.append(len(feat))
        i64 = np.int64
        return (np.array(ptr, i64), np.array(leaf, i64), np.array(left, i64), np.array(right, i64),
                np.array(dleft, np.bool_), np.array(feat, i64), np.array(is_cat, np.bool_),
                np.array(thr, float), np.array(rev, np.bool_), np.array(lut_off, i64),
                np.array(lut_len, i64),
                np.concatenate(luts) if luts else np.zeros(0, np.int8))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Terminal node index of every row of ``X`` (routing is total)."""
        X = np.asarray(X, dtype=float)
        if self._flat is None:
            self._flat = self._flatten()
        return _kernels.apply_tree(X, *self._flat)

    def assign_node(self, row) -> int:
        return int(self.apply(np.asarray(row, dtype=float).reshape(1, -1))[0])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_values[self.apply(X)]

    def feature_gains(self) -> np.ndarray:
        """SSE reduction attributed to each predictor over this tree's splits."""
        out = np.zeros(self.n_features)
        for nd in self.nodes:
            if not nd.is_leaf:
                out[nd.rule.feature] += nd.gain
        return out

    def split_features(self) -> set:
        return {nd.rule.feature for nd in self.nodes if not nd.is_leaf}


def _surrogates(X, S, cont_cols, idx, obs, left, primary, categorical, default_left, limit,
                scratch_target, scratch_use):
    """Rank backup rules by how many primary-observed rows they route the same way.

    A rule is kept only if it beats the majority direction on the rows where
    both predictors are observed.
    """
    found = []
    if cont_cols.size:
        scratch_target[idx] = left
        scratch_use[idx] = obs
        agree, n_both, n_left, thr, rev = _kernels.surrogate_scan(
            S, X, cont_cols, primary, scratch_target, scratch_use)
        scratch_use[idx] = False
        majority = np.maximum(n_left, n_both - n_left)
        for c in np.flatnonzero((agree > majority) & (n_both >= 2)).tolist():
            found.append((-int(agree[c]), int(cont_cols[c]), (float(thr[c]), bool(rev[c])),
                          agree[c] / n_both[c]))
    cat_cols = np.flatnonzero(categorical)
    if cat_cols.size:
        target = left[obs]
        Xo = X[idx[obs]]
    for k in cat_cols:
        if k == primary:
            continue
        col = Xo[:, k]
        seen = ~np.isnan(col)
        n_both = int(seen.sum())
        if n_both < 2:
            continue
        c = col[seen].astype(np.int64)
        t = target[seen]
        L = int(c.max()) + 1
        cl = np.bincount(c[t], minlength=L)
        cr = np.bincount(c[~t], minlength=L)
        n_l = int(cl.sum())
        majority = max(n_l, n_both - n_l)
        known = np.flatnonzero(cl + cr)
        goes_left = (cl > cr) | ((cl == cr) & default_left)
        agree = int(np.maximum(cl, cr).sum())
        if agree > majority:
            found.append((-agree, int(k), (tuple(known[goes_left[known]].tolist()),
                                           tuple(known.tolist())), agree / n_both))
    found.sort(key=lambda t: (t[0], t[1]))
    rules = []
    for _, k, spec, _ in found[:limit]:
        if categorical[k]:
            rules.append(SplitRule(k, left_levels=spec[0], known_levels=spec[1]))
        else:
            rules.append(SplitRule(k, threshold=spec[0], reverse=spec[1]))
    return rules, [float(f[3]) for f in found[:limit]]


def _best_split(X, S, idx, rn, r, categorical, cont_cols, cont_pos, min_node, tol):
    """Best (rule, gain) at a node, or ``None``. Near-ties go to the lowest (predictor, cut)."""
    p = X.shape[1]
    colmax = np.full(p, -np.inf)
    if cont_cols.size:
        colmax[cont_cols] = _kernels.all_column_max(S, X, cont_cols, r, min_node)
    cat_cache = {}
    for j in np.flatnonzero(categorical):
        g, order, known = _kernels.categorical_gains(X[:, j], idx, r, min_node)
        cat_cache[j] = (g, order, known)
        if g.size:
            colmax[j] = g.max()
    best = colmax.max() if p else -np.inf
    if not best > tol:
        return None
    cutoff = best - tol
    j = int(np.flatnonzero(colmax >= cutoff)[0])
    if categorical[j]:
        g, order, known = cat_cache[j]
        t = int(np.flatnonzero(g >= cutoff)[0])
        rule = SplitRule(j, left_levels=tuple(np.sort(order[: t + 1]).tolist()),
                         known_levels=tuple(known.tolist()))
        return rule, float(g[t])
    thr, g = _kernels.column_gains(S[cont_pos[j]], X[:, j], r, min_node)
    t = int(np.flatnonzero(g >= cutoff)[0])
    return SplitRule(j, threshold=float(thr[t])), float(g[t])


def fit_tree(X: np.ndarray, r: np.ndarray, rows=None, params: TreeParams = TreeParams(),
             categorical=None) -> Tree:
    """Grow a least-squares regression tree on ``X[rows]`` against ``r[rows]``.

    ``categorical`` flags columns holding level codes. A node becomes terminal
    at the depth limit, when it has fewer than ``2 * min_node`` rows, or when
    no admissible split reduces SSE. Rows with a missing splitting value do
    not score the split; they are routed by surrogate rules (or the majority
    direction) before the children are grown.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ParameterError("X must be two-dimensional")
    r = np.ascontiguousarray(r, dtype=float)
    if r.shape[0] != X.shape[0]:
        raise ParameterError("r must have one entry per row of X")
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size < 1:
        raise DataError("fit_tree needs at least one row")
    if not np.all(np.isfinite(r[rows])):
        raise DataError("response must be finite on the fitted rows")
    p = X.shape[1]
    categorical = np.zeros(p, bool) if categorical is None else np.asarray(categorical, bool)
    cont_cols = np.flatnonzero(~categorical)
    cont_pos = np.full(p, -1)
    cont_pos[cont_cols] = np.arange(cont_cols.size)
    min_node = params.min_node
    go_left = np.zeros(X.shape[0], dtype=np.bool_)
    scratch_target = np.zeros(X.shape[0], dtype=np.bool_)
    scratch_use = np.zeros(X.shape[0], dtype=np.bool_)

    nodes: list = []
    n_leaves = 0
    S0 = _kernels.presort(X, rows, cont_cols) if cont_cols.size else np.empty((0, rows.size), np.int64)
    # (rows, presorted rows, depth, parent id, is left child)
    stack = [(rows, S0, 0, -1, False)]
    while stack:
        idx, S, depth, parent, is_left = stack.pop()
        nid = len(nodes)
        if parent >= 0:
            if is_left:
                nodes[parent].left = nid
            else:
                nodes[parent].right = nid
        rn = r[idx]
        n = idx.size
        mean = rn.mean()
        sse = float(np.sum((rn - mean) ** 2))
        split = None
        if depth < params.depth and n >= 2 * min_node and sse > 1e-20 * max(float(rn @ rn), 1e-300):
            split = _best_split(X, S, idx, rn, r, categorical, cont_cols, cont_pos,
                                min_node, TIE_RTOL * sse)
        if split is None:
            nodes.append(Node(leaf=n_leaves, value=float(mean), count=int(n)))
            n_leaves += 1
            continue
        rule, gain = split
        Xn = X[idx]
        obs, left = rule.route(Xn[:, rule.feature])
        n_left = int(left.sum())
        default_left = n_left >= int(obs.sum()) - n_left
        node = Node(rule=rule, default_left=default_left, gain=gain, count=int(n),
                    value=float(mean))
        if params.n_surrogates > 0 and p > 1:
            node.surrogates, node.agreements = _surrogates(
                X, S, cont_cols, idx, obs, left, rule.feature, categorical, default_left,
                params.n_surrogates, scratch_target, scratch_use)
        nodes.append(node)
        gl = node.go_left(Xn) if not obs.all() else left
        go_left[idx] = gl
        if cont_cols.size:
            SL, SR = _kernels.partition(S, go_left)
        else:
            SL = np.empty((0, int(gl.sum())), np.int64)
            SR = np.empty((0, int(n - gl.sum())), np.int64)
        go_left[idx] = False
        stack.append((idx[~gl], SR, depth + 1, nid, False))
        stack.append((idx[gl], SL, depth + 1, nid, True))
    return Tree(nodes, p)


def predict_tree(t: Tree, X: np.ndarray) -> np.ndarray:
    return t.predict(X)


def assign_node(t: Tree, row) -> int:
    return t.assign_node(row)
