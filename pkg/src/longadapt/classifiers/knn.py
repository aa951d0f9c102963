"""k-nearest-neighbour vote under Euclidean distance.

Equal distances resolve toward the lower training index.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 512


def fit(X, y, v, hp, seed):
    return {"X": X.copy(), "y": y.astype(np.float64).copy()}


def score(params, X, k):
    train, labels = params["X"], params["y"]
    k = min(int(k), train.shape[0])
    out = np.empty(X.shape[0])
    for a in range(0, X.shape[0], _CHUNK):
        block = X[a:a + _CHUNK]
        diff = block[:, None, :] - train[None, :, :]
        dist = np.einsum("ijk,ijk->ij", diff, diff)
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        out[a:a + _CHUNK] = labels[nearest].mean(axis=1)
    return out
