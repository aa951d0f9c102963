"""Linear models: L2 logistic regression (damped Newton) and a hinge-loss SVM.

Both minimise ``sum_i v_i * loss_i + penalty`` where the weights ``v`` have
already been rescaled to a fixed total mass, so the penalty strength does not
depend on the absolute scale of the caller's weights. Intercepts are the last
parameter.
"""

from __future__ import annotations

import numpy as np


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _logistic_objective(beta, Xa, y, v, l2):
    z = Xa @ beta
    # log(1 + exp(z)) - y z, computed stably
    loss = np.logaddexp(0.0, z) - y * z
    return float(v @ loss + 0.5 * l2 * beta[:-1] @ beta[:-1])


def fit_logreg(X, y, v, hp, seed):
    l2 = float(hp["l2"])
    max_iter = int(hp["max_iter"])
    tol = float(hp["tol"])
    Xa = _augment(X)
    d = Xa.shape[1]
    beta = np.zeros(d)
    penalty = np.full(d, l2)
    penalty[-1] = 0.0
    obj = _logistic_objective(beta, Xa, y, v, l2)
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-(Xa @ beta)))
        grad = Xa.T @ (v * (p - y)) + penalty * beta
        hw = v * p * (1.0 - p)
        hess = (Xa * hw[:, None]).T @ Xa + np.diag(penalty)
        # tiny ridge on the intercept keeps the system solvable on degenerate data
        hess[-1, -1] += 1e-12
        step = np.linalg.solve(hess, grad)
        t = 1.0
        # near the optimum the decrease drops below float resolution; a relative
        # slack lets the full Newton step through instead of stalling
        slack = 1e-13 * max(1.0, abs(obj))
        while True:
            cand = beta - t * step
            cand_obj = _logistic_objective(cand, Xa, y, v, l2)
            if cand_obj <= obj + slack or t < 1e-10:
                break
            t *= 0.5
        beta, obj = cand, cand_obj
        if np.max(np.abs(t * step)) < tol:
            break
    return {"coef": beta[:-1].copy(), "intercept": np.array([beta[-1]])}


def fit_linear_svm(X, y, v, hp, seed):
    """Pegasos-style full-batch subgradient descent with iterate averaging.

    The bias is handled as a constant feature and is regularised with the
    weights.
    """
    C = float(hp["C"])
    n_iter = int(hp["n_iter"])
    mass = float(v.sum())
    lam = 1.0 / (C * mass)
    Xa = _augment(X)
    s = 2.0 * y - 1.0
    w = np.zeros(Xa.shape[1])
    avg = np.zeros_like(w)
    radius = 1.0 / np.sqrt(lam)
    for t in range(1, n_iter + 1):
        eta = 1.0 / (lam * t)
        active = s * (Xa @ w) < 1.0
        grad = lam * w - (Xa[active].T @ (v[active] * s[active])) / mass
        w = w - eta * grad
        norm = np.linalg.norm(w)
        if norm > radius:
            w *= radius / norm
        avg += (w - avg) / t
    return {"coef": avg[:-1].copy(), "intercept": np.array([avg[-1]])}


def margin(params, X):
    return X @ params["coef"] + params["intercept"][0]
