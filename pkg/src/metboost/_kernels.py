"""Numba kernels for split and surrogate scans over presorted row lists.

``S`` is a ``(n_cols, n_rows)`` array: row ``c`` lists the node's global row
ids ordered by the value of continuous column ``cols[c]``, with missing
values last. Children inherit the order through a stable partition, so
each tree sorts only once.

Gains are SSE reductions ``S_L^2/n_L + S_R^2/n_R - S^2/n`` on residuals
centred at the mean over the column's observed rows.
"""

import numpy as np
from numba import njit


def presort(X, rows, cols):
    sub = X[np.ix_(rows, cols)]
    order = np.argsort(sub, axis=0, kind="stable")  # NaN sorts last
    return np.ascontiguousarray(rows[order].T)


@njit(cache=True)
def _n_observed(srow, x):
    n = srow.shape[0]
    while n > 0 and np.isnan(x[srow[n - 1]]):
        n -= 1
    return n


@njit(cache=True)
def column_gains(srow, x, r, min_node):
    """Admissible cuts of one presorted column: ``(thresholds, gains)``, increasing thresholds."""
    n = _n_observed(srow, x)
    thr = np.empty(max(n - 1, 0))
    gains = np.empty(max(n - 1, 0))
    if n < 2 * min_node or n < 2:
        return thr[:0], gains[:0]
    mean = 0.0
    for i in range(n):
        mean += r[srow[i]]
    mean /= n
    total = 0.0
    for i in range(n):
        total += r[srow[i]] - mean
    m = 0
    s_left = 0.0
    for k in range(1, n):
        s_left += r[srow[k - 1]] - mean
        if k < min_node or n - k < min_node:
            continue
        lo = x[srow[k - 1]]
        hi = x[srow[k]]
        if lo < hi:
            s_right = total - s_left
            thr[m] = 0.5 * (lo + hi)
            gains[m] = s_left * s_left / k + s_right * s_right / (n - k) - total * total / n
            m += 1
    return thr[:m], gains[:m]


@njit(cache=True)
def all_column_max(S, X, cols, r, min_node):
    """Largest admissible gain per presorted column (``-inf`` if none)."""
    out = np.full(cols.shape[0], -np.inf)
    for c in range(cols.shape[0]):
        srow = S[c]
        x = X[:, cols[c]]
        n = _n_observed(srow, x)
        if n < 2 * min_node or n < 2:
            continue
        mean = 0.0
        for i in range(n):
            mean += r[srow[i]]
        mean /= n
        total = 0.0
        for i in range(n):
            total += r[srow[i]] - mean
        best = -np.inf
        s_left = 0.0
        for k in range(1, n):
            s_left += r[srow[k - 1]] - mean
            if k < min_node or n - k < min_node:
                continue
            if x[srow[k - 1]] < x[srow[k]]:
                s_right = total - s_left
                g = s_left * s_left / k + s_right * s_right / (n - k) - total * total / n
                if g > best:
                    best = g
        out[c] = best
    return out


@njit(cache=True)
def partition(S, go_left):
    """Stable split of every presorted row list by the global mask ``go_left``."""
    m, n = S.shape
    n_left = 0
    for i in range(n):
        if go_left[S[0, i]]:
            n_left += 1
    L = np.empty((m, n_left), np.int64)
    R = np.empty((m, n - n_left), np.int64)
    for c in range(m):
        a = 0
        b = 0
        for i in range(n):
            row = S[c, i]
            if go_left[row]:
                L[c, a] = row
                a += 1
            else:
                R[c, b] = row
                b += 1
    return L, R


@njit(cache=True)
def surrogate_scan(S, X, cols, skip, target, use):
    """Best threshold rule per presorted column for reproducing ``target`` on rows with ``use``.

    Returns per column ``(agree, n_both, n_left, threshold, reverse)``, where
    ``n_both`` counts rows with ``use`` and an observed value and ``n_left``
    how many of those go left. ``reverse`` rules send values at or above the
    threshold left. Column ``skip`` is not scanned.
    """
    m = cols.shape[0]
    agree = np.zeros(m, np.int64)
    n_both = np.zeros(m, np.int64)
    n_lefts = np.zeros(m, np.int64)
    thr = np.full(m, np.nan)
    rev = np.zeros(m, np.bool_)
    buf = np.empty(S.shape[1], np.int64)
    for c in range(m):
        if cols[c] == skip:
            continue
        x = X[:, cols[c]]
        srow = S[c]
        n = 0
        nl = 0
        for i in range(srow.shape[0]):
            row = srow[i]
            if use[row] and not np.isnan(x[row]):
                buf[n] = row
                n += 1
                if target[row]:
                    nl += 1
        n_both[c] = n
        n_lefts[c] = nl
        if n < 2:
            continue
        nr = n - nl
        best = -1
        cl = 0
        cr = 0
        for k in range(1, n):
            if target[buf[k - 1]]:
                cl += 1
            else:
                cr += 1
            a = x[buf[k - 1]]
            b = x[buf[k]]
            if a < b:
                fwd = cl + (nr - cr)
                bwd = cr + (nl - cl)
                if fwd > best:
                    best = fwd
                    thr[c] = 0.5 * (a + b)
                    rev[c] = False
                if bwd > best:
                    best = bwd
                    thr[c] = 0.5 * (a + b)
                    rev[c] = True
        if best >= 0:
            agree[c] = best
    return agree, n_both, n_lefts, thr, rev


@njit(cache=True)
def categorical_gains(x, idx, r, min_node):
    """Ordered-level split scan of a level-code column over rows ``idx``.

    Levels present among the observed rows are ordered by mean residual (ties
    by code); candidate ``t`` sends ``order[:t+1]`` left. Returns
    ``(gains, order, present)`` with ``-inf`` for inadmissible candidates.
    """
    n = 0
    mean = 0.0
    top = 0
    for i in idx:
        v = x[i]
        if not np.isnan(v):
            n += 1
            mean += r[i]
            if int(v) + 1 > top:
                top = int(v) + 1
    empty_i = np.empty(0, np.int64)
    if n < 2 * min_node or n < 2:
        return np.empty(0), empty_i, empty_i
    mean /= n
    cnt = np.zeros(top, np.int64)
    s = np.zeros(top)
    for i in idx:
        v = x[i]
        if not np.isnan(v):
            c = int(v)
            cnt[c] += 1
            s[c] += r[i] - mean
    present = np.flatnonzero(cnt)
    k = present.shape[0]
    if k < 2:
        return np.empty(0), empty_i, empty_i
    means = s[present] / cnt[present]
    order = present[np.argsort(means, kind="mergesort")]
    total = 0.0
    for c in present:
        total += s[c]
    gains = np.empty(k - 1)
    nl = 0
    sl = 0.0
    for t in range(k - 1):
        nl += cnt[order[t]]
        sl += s[order[t]]
        nr = n - nl
        if nl < min_node or nr < min_node:
            gains[t] = -np.inf
        else:
            gains[t] = sl * sl / nl + (total - sl) ** 2 / nr - total * total / n
    return gains, order, present


@njit(cache=True)
def apply_tree(X, ptr, leaf, left, right, dleft, feat, is_cat, thr, rev, lut_off, lut_len, lut):
    """Route every row of ``X`` to its terminal node through flattened rule lists.

    Node ``i`` tries rules ``ptr[i]:ptr[i+1]`` (primary first, then
    surrogates) and falls back to ``dleft[i]`` when none applies.
    """
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        nd = 0
        while leaf[nd] < 0:
            d = -1
            for q in range(ptr[nd], ptr[nd + 1]):
                v = X[i, feat[q]]
                if np.isnan(v):
                    continue
                if is_cat[q]:
                    if v < 0 or v >= lut_len[q]:
                        continue
                    code = lut[lut_off[q] + int(v)]
                    if code == 0:
                        continue
                    d = 1 if code == 1 else 0
                elif rev[q]:
                    d = 1 if v >= thr[q] else 0
                else:
                    d = 1 if v < thr[q] else 0
                break
            if d < 0:
                d = 1 if dleft[nd] else 0
            nd = left[nd] if d == 1 else right[nd]
        out[i] = leaf[nd]
    return out
