"""One-hidden-layer ReLU network trained full-batch with Adam.

Full-batch steps keep integer sample weights equivalent to duplicated rows;
the only randomness is the Glorot initialisation drawn from ``seed``.
"""

from __future__ import annotations

import numpy as np


def _init(rng, d, hidden):
    lim1 = np.sqrt(6.0 / (d + hidden))
    lim2 = np.sqrt(6.0 / (hidden + 1))
    return {
        "W1": rng.uniform(-lim1, lim1, size=(d, hidden)),
        "b1": np.zeros(hidden),
        "W2": rng.uniform(-lim2, lim2, size=hidden),
        "b2": np.zeros(1),
    }


def margin(params, X):
    hidden = np.maximum(X @ params["W1"] + params["b1"], 0.0)
    return hidden @ params["W2"] + params["b2"][0]


def fit(X, y, v, hp, seed):
    rng = np.random.default_rng(seed)
    params = _init(rng, X.shape[1], int(hp["hidden"]))
    lr = float(hp["learning_rate"])
    l2 = float(hp["l2"])
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(p) for k, p in params.items()}
    s = {k: np.zeros_like(p) for k, p in params.items()}
    vn = v / v.sum()
    steps = int(hp["epochs"]) * int(hp["steps_per_epoch"])
    for t in range(1, steps + 1):
        pre = X @ params["W1"] + params["b1"]
        hidden = np.maximum(pre, 0.0)
        z = hidden @ params["W2"] + params["b2"][0]
        p = 1.0 / (1.0 + np.exp(-z))
        dz = vn * (p - y)
        grads = {
            "W2": hidden.T @ dz + l2 * params["W2"],
            "b2": np.array([dz.sum()]),
        }
        dh = np.outer(dz, params["W2"]) * (pre > 0)
        grads["W1"] = X.T @ dh + l2 * params["W1"]
        grads["b1"] = dh.sum(axis=0)
        for k in params:
            m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
            s[k] = beta2 * s[k] + (1 - beta2) * grads[k] ** 2
            mhat = m[k] / (1 - beta1 ** t)
            shat = s[k] / (1 - beta2 ** t)
            params[k] = params[k] - lr * mhat / (np.sqrt(shat) + eps)
    return params
