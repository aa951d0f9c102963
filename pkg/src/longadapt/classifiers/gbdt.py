"""Second-order gradient boosting of logistic loss with exact greedy splits.

Trees grow depth-wise. At every level each feature is scanned once in
presorted order, accumulating per-node gradient/hessian sums, so a level costs
O(n * d). Candidate thresholds are midpoints between consecutive distinct
values; rows go left when ``x < threshold``. Ties in gain (up to a relative
1e-9) keep the first candidate found (lowest feature index, then lowest
threshold), which makes split selection independent of row order among equal
values and of how the gradient sums were rounded.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import InvalidSplit

# smallest loss change accepted as a split (XGBoost's kRtEps)
MIN_LOSS_CHANGE = 1e-6
_HESS_FLOOR = 1e-16
# gains this close count as ties; identical partitions reached through different
# features otherwise differ only by summation order
_TIE_TOL = 1e-9


@njit(cache=True, nogil=True)
def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@njit(cache=True, nogil=True)
def _grow_tree(X, order, sorted_x, g, h, max_depth, l2, min_child_weight, min_gain, eta,
               feat, thr, left, right, value, margin):
    n, d = X.shape
    max_nodes = feat.shape[0]
    G = np.zeros(max_nodes)
    H = np.zeros(max_nodes)
    GL = np.zeros(max_nodes)
    HL = np.zeros(max_nodes)
    last = np.zeros(max_nodes)
    seen = np.zeros(max_nodes, dtype=np.bool_)
    best = np.zeros(max_nodes)
    bfeat = np.full(max_nodes, -1, dtype=np.int64)
    bthr = np.zeros(max_nodes)
    pos = np.zeros(n, dtype=np.int64)
    for i in range(n):
        G[0] += g[i]
        H[0] += h[i]
    feat[:] = -1
    left[:] = -1
    right[:] = -1
    value[:] = 0.0
    lvl_start = 0
    lvl_end = 1
    n_nodes = 1
    for depth in range(max_depth + 1):
        if depth < max_depth:
            for k in range(lvl_start, lvl_end):
                best[k] = min_gain
                bfeat[k] = -1
            for j in range(d):
                for k in range(lvl_start, lvl_end):
                    GL[k] = 0.0
                    HL[k] = 0.0
                    seen[k] = False
                oj = order[j]
                xj = sorted_x[j]
                for r in range(n):
                    i = oj[r]
                    k = pos[i]
                    if k < 0:
                        continue
                    x = xj[r]
                    if seen[k] and x != last[k]:
                        hl = HL[k]
                        hr = H[k] - hl
                        if hl >= min_child_weight and hr >= min_child_weight:
                            gl = GL[k]
                            gr = G[k] - gl
                            gain = gl * gl / (hl + l2) + gr * gr / (hr + l2) - G[k] * G[k] / (H[k] + l2)
                            if gain > best[k] + _TIE_TOL * (abs(best[k]) + 1.0):
                                best[k] = gain
                                bfeat[k] = j
                                t = 0.5 * (last[k] + x)
                                if t <= last[k]:
                                    t = x
                                bthr[k] = t
                    GL[k] += g[i]
                    HL[k] += h[i]
                    last[k] = x
                    seen[k] = True
        new_start = n_nodes
        for k in range(lvl_start, lvl_end):
            if depth < max_depth and bfeat[k] >= 0 and n_nodes + 2 <= max_nodes:
                feat[k] = bfeat[k]
                thr[k] = bthr[k]
                left[k] = n_nodes
                right[k] = n_nodes + 1
                G[n_nodes] = 0.0
                H[n_nodes] = 0.0
                G[n_nodes + 1] = 0.0
                H[n_nodes + 1] = 0.0
                n_nodes += 2
            else:
                value[k] = -G[k] / (H[k] + l2) * eta
        for i in range(n):
            k = pos[i]
            if k < 0:
                continue
            if feat[k] >= 0:
                c = left[k] if X[i, feat[k]] < thr[k] else right[k]
                pos[i] = c
                G[c] += g[i]
                H[c] += h[i]
            else:
                margin[i] += value[k]
                pos[i] = -1
        if n_nodes == new_start:
            break
        lvl_start = new_start
        lvl_end = n_nodes
    return n_nodes


@njit(cache=True, nogil=True)
def _boost(X, order, sorted_x, y, v, n_rounds, max_depth, l2, min_child_weight, min_gain, eta,
           feat, thr, left, right, value):
    n = X.shape[0]
    margin = np.zeros(n)
    g = np.empty(n)
    h = np.empty(n)
    sizes = np.zeros(n_rounds, dtype=np.int64)
    for t in range(n_rounds):
        for i in range(n):
            p = _sigmoid(margin[i])
            g[i] = v[i] * (p - y[i])
            h[i] = v[i] * max(p * (1.0 - p), _HESS_FLOOR)
        sizes[t] = _grow_tree(X, order, sorted_x, g, h, max_depth, l2, min_child_weight, min_gain, eta,
                              feat[t], thr[t], left[t], right[t], value[t], margin)
    return sizes


@njit(cache=True, nogil=True)
def _predict_margin(X, feat, thr, left, right, value):
    n = X.shape[0]
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for t in range(feat.shape[0]):
            k = 0
            while feat[t, k] >= 0:
                k = left[t, k] if X[i, feat[t, k]] < thr[t, k] else right[t, k]
            s += value[t, k]
        out[i] = s
    return out


def fit(X: np.ndarray, y: np.ndarray, v: np.ndarray, hp: dict, seed: int) -> dict:
    n_rounds = int(hp["n_rounds"])
    max_depth = int(hp["max_depth"])
    max_nodes = 2 ** (max_depth + 1) - 1
    X = np.ascontiguousarray(X, dtype=np.float64)
    # feature-major presorted row indices and values
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))
    sorted_x = np.ascontiguousarray(np.take_along_axis(X.T, order, axis=1))
    feat = np.empty((n_rounds, max_nodes), dtype=np.int64)
    thr = np.zeros((n_rounds, max_nodes))
    left = np.empty((n_rounds, max_nodes), dtype=np.int64)
    right = np.empty((n_rounds, max_nodes), dtype=np.int64)
    value = np.zeros((n_rounds, max_nodes))
    sizes = _boost(X, order, sorted_x, y.astype(np.float64), v.astype(np.float64), n_rounds, max_depth,
                   float(hp["l2"]), float(hp["min_child_weight"]),
                   max(float(hp["min_split_gain"]), MIN_LOSS_CHANGE), float(hp["learning_rate"]),
                   feat, thr, left, right, value)
    width = int(sizes.max()) if sizes.size else 1
    return {
        "feature": feat[:, :width].copy(),
        "threshold": thr[:, :width].copy(),
        "left": left[:, :width].copy(),
        "right": right[:, :width].copy(),
        "value": value[:, :width].copy(),
    }


def margin(params: dict, X: np.ndarray) -> np.ndarray:
    return _predict_margin(np.ascontiguousarray(X, dtype=np.float64), params["feature"], params["threshold"],
                           params["left"], params["right"], params["value"])


def root_gain(X, y, weights, feature: int, threshold: float, l2: float, margin0=0.0) -> float:
    """Loss change of splitting the root at ``X[:, feature] < threshold``.

    Uses weighted logistic-loss derivatives ``g = w (p - y)`` and
    ``h = w p (1 - p)`` at the current margin ``margin0``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not 0 <= feature < X.shape[1] or not np.isfinite(threshold):
        raise InvalidSplit(f"invalid split ({feature}, {threshold})")
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    p = 1.0 / (1.0 + np.exp(-np.broadcast_to(np.asarray(margin0, dtype=np.float64), y.shape)))
    g = w * (p - y)
    h = w * p * (1.0 - p)
    go_left = X[:, feature] < threshold
    gl, hl = g[go_left].sum(), h[go_left].sum()
    G, Hs = g.sum(), h.sum()
    gr, hr = G - gl, Hs - hl
    return float(gl * gl / (hl + l2) + gr * gr / (hr + l2) - G * G / (Hs + l2))
