"""Rank-based AUROC, tie-aware ROC points and per-class F1."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import SingleClass


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pos = int(np.sum(y == 1))
    neg = int(np.sum(y == 0))
    if pos + neg != y.size:
        raise ValueError("labels must be 0 or 1")
    if pos == 0 or neg == 0:
        raise SingleClass("AUROC needs both classes")
    return s, y, pos, neg


def midranks(values) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    return rankdata(np.asarray(values, dtype=np.float64), method="average")


def auroc(scores, labels) -> float:
    """Probability a positive outscores a negative, ties counting one half."""
    s, y, pos, neg = _check(scores, labels)
    r = midranks(s)
    return float((r[y == 1].sum() - pos * (pos + 1) / 2.0) / (pos * neg))


def roc_points(scores, labels) -> list[tuple[float, float]]:
    """(fpr, tpr) after each distinct threshold, highest first, from (0, 0) to (1, 1)."""
    s, y, pos, neg = _check(scores, labels)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted == 1)
    fp = np.cumsum(y_sorted == 0)
    last_of_group = np.flatnonzero(np.diff(s_sorted) != 0)
    ends = np.concatenate((last_of_group, [s.size - 1]))
    pts = [(0.0, 0.0)]
    pts += [(fp[e] / neg, tp[e] / pos) for e in ends]
    return [(float(a), float(b)) for a, b in pts]


def trapezoid_area(points) -> float:
    pts = np.asarray(points, dtype=np.float64)
    return float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2.0))


def f1(pred_labels, true_labels, positive_class: int = 1) -> float:
    """2TP / (2TP + FP + FN) for the named class; 0 when the denominator is 0."""
    p = np.asarray(pred_labels).reshape(-1)
    t = np.asarray(true_labels).reshape(-1)
    if p.size == 0 or p.shape != t.shape:
        raise ValueError("need equal-length, non-empty label sequences")
    tp = int(np.sum((p == positive_class) & (t == positive_class)))
    fp = int(np.sum((p == positive_class) & (t != positive_class)))
    fn = int(np.sum((p != positive_class) & (t == positive_class)))
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def error_rate(scores, labels, threshold: float = 0.5) -> float:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    return float(np.mean((s >= threshold).astype(int) != y))
