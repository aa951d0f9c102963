"""Standardize-then-train wrapper used by the adaptation and protocol layers.

The standardizer is fitted on exactly the rows the classifier trains on (rows
with positive weight), so a model's view of the features never depends on data
it gives no weight to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifiers import ModelSpec, TrainedModel, train_classifier
from .preprocess import Standardizer, apply_standardizer, fit_standardizer


@dataclass(frozen=True, eq=False)
class ScaledModel:
    standardizer: Standardizer
    model: TrainedModel

    def scores(self, X: np.ndarray) -> np.ndarray:
        return self.model.scores(apply_standardizer(self.standardizer, X))


def fit_scaled(spec: ModelSpec, X: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None) -> ScaledModel:
    X = np.asarray(X, dtype=np.float64)
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        keep = weights > 0
        if not keep.all():
            X, y, weights = X[keep], np.asarray(y)[keep], weights[keep]
    std = fit_standardizer(X)
    model = train_classifier(spec, apply_standardizer(std, X), y, weights)
    return ScaledModel(std, model)
