"""Sample-weighted binary classifiers producing scores in [0, 1].

Every kind is trained through :func:`train_classifier`, which validates the
data, drops zero-weight rows, replaces uniform weights by unit weights and
rescales the rest to a fixed total mass (``weight_mass``). The last two steps
make training invariant to a global rescaling of the weights, so that e.g. a
reweighted target set whose source half was zeroed out trains exactly like the
plain target set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    ConfigError,
    DimensionMismatch,
    EmptyData,
    NonFiniteFeature,
    SingleClassData,
    UnweightableModelKind,
)
from . import gbdt, knn, linear, mlp

KINDS = ("gbdt", "logreg", "linear_svm", "knn", "mlp")
WEIGHTABLE = ("gbdt", "logreg", "linear_svm", "mlp")

DEFAULTS: dict[str, dict] = {
    "gbdt": {"n_rounds": 100, "max_depth": 6, "learning_rate": 0.3, "l2": 1.0,
             "min_child_weight": 1.0, "min_split_gain": 0.0, "weight_mass": 1000.0},
    "logreg": {"l2": 1.0, "max_iter": 200, "tol": 1e-12, "weight_mass": 1000.0},
    "linear_svm": {"C": 1.0, "n_iter": 1000, "weight_mass": 1000.0},
    "knn": {"k": 5},
    "mlp": {"hidden": 64, "epochs": 50, "steps_per_epoch": 20, "learning_rate": 1e-3, "l2": 1e-4},
}

_POSITIVE = {"learning_rate", "weight_mass", "C", "tol"}
_AT_LEAST_ONE = {"n_rounds", "max_depth", "k", "hidden", "epochs", "steps_per_epoch", "max_iter", "n_iter"}
_NON_NEGATIVE = {"l2", "min_child_weight", "min_split_gain"}


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "gbdt"
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        merged = {**DEFAULTS[self.kind], **self.hyperparameters}
        for key, val in merged.items():
            if key in _POSITIVE and not val > 0:
                raise ConfigError(f"{key} must be > 0")
            if key in _AT_LEAST_ONE and not val >= 1:
                raise ConfigError(f"{key} must be >= 1")
            if key in _NON_NEGATIVE and not val >= 0:
                raise ConfigError(f"{key} must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "hyperparameters", merged)

    @property
    def weightable(self) -> bool:
        return self.kind in WEIGHTABLE

    def with_seed(self, seed: int) -> "ModelSpec":
        return ModelSpec(self.kind, dict(self.hyperparameters), int(seed))


@dataclass(frozen=True)
class WeightedDataset:
    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray | None = None


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True, eq=False)
class TrainedModel:
    spec: ModelSpec
    n_features: int
    params: dict

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        return X

    def margin(self, X) -> np.ndarray:
        X = self._check(X)
        kind = self.spec.kind
        if kind == "gbdt":
            return gbdt.margin(self.params, X)
        if kind in ("logreg", "linear_svm"):
            return linear.margin(self.params, X)
        if kind == "mlp":
            return mlp.margin(self.params, X)
        raise TypeError("knn has no margin")

    def scores(self, X) -> np.ndarray:
        """Scores in [0, 1] for every row of ``X``."""
        if self.spec.kind == "knn":
            return knn.score(self.params, self._check(X), self.spec.hyperparameters["k"])
        return _sigmoid(self.margin(X))

    def to_json(self) -> str:
        doc = {
            "kind": self.spec.kind,
            "hyperparameters": self.spec.hyperparameters,
            "seed": int(self.spec.seed),
            "n_features": self.n_features,
            "params": {
                k: {"dtype": str(a.dtype), "shape": list(a.shape), "data": a.reshape(-1).tolist()}
                for k, a in self.params.items()
            },
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        doc = json.loads(text)
        spec = ModelSpec(doc["kind"], doc["hyperparameters"], doc["seed"])
        params = {
            k: np.array(p["data"], dtype=p["dtype"]).reshape(p["shape"]) for k, p in doc["params"].items()
        }
        return cls(spec, int(doc["n_features"]), params)


def _prepare(X, y, weights):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyData("no training instances")
    if y.shape != (X.shape[0],):
        raise DimensionMismatch("labels do not match the number of instances")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("training features contain non-finite values")
    if not np.all(np.isin(y, (0, 1))):
        raise ConfigError("labels must be 0 or 1")
    if weights is None:
        w = np.ones(X.shape[0])
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != y.shape:
            raise DimensionMismatch("weights do not match the number of instances")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ConfigError("weights must be finite and non-negative")
    keep = w > 0
    if not keep.all():
        X, y, w = X[keep], y[keep], w[keep]
    if X.shape[0] == 0:
        raise EmptyData("all instances have zero weight")
    if np.all(y == y[0]):
        raise SingleClassData("training data contains a single class")
    if np.all(w == w[0]):
        w = np.ones(X.shape[0])
    return np.ascontiguousarray(X), y.astype(np.float64), w


def train_classifier(spec: ModelSpec, data, y=None, weights=None) -> TrainedModel:
    """Fit ``spec`` on ``data`` (a :class:`WeightedDataset` or a feature matrix).

    Deterministic given ``spec.seed`` and the data. Raises ``EmptyData``,
    ``SingleClassData``, ``NonFiniteFeature`` or, for knn with non-uniform
    weights, ``UnweightableModelKind``.
    """
    if isinstance(data, WeightedDataset):
        X, y, weights = data.X, data.y, data.weights
    else:
        X = data
    X, y, w = _prepare(X, y, weights)
    hp = spec.hyperparameters
    if spec.kind == "knn":
        if not np.all(w == 1.0):
            raise UnweightableModelKind("knn does not support non-uniform sample weights")
        params = knn.fit(X, y, w, hp, spec.seed)
        return TrainedModel(spec, X.shape[1], params)
    if spec.kind == "mlp":
        v = w
    else:
        v = w * (float(hp["weight_mass"]) / w.sum())
    fitter = {
        "gbdt": gbdt.fit,
        "logreg": linear.fit_logreg,
        "linear_svm": linear.fit_linear_svm,
        "mlp": mlp.fit,
    }[spec.kind]
    return TrainedModel(spec, X.shape[1], fitter(X, y, v, hp, spec.seed))


def predict_score(model: TrainedModel, features) -> float:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("predict_score expects a single feature vector")
    return float(model.scores(x)[0])


def predict_label(model: TrainedModel, features, threshold: float = 0.5) -> int:
    return int(predict_score(model, features) >= threshold)


def gbdt_root_gain(data: WeightedDataset, split: tuple[int, float], l2: float = 1.0, margin=0.0) -> float:
    return gbdt.root_gain(data.X, data.y, data.weights, int(split[0]), float(split[1]), l2, margin)


__all__ = [
    "DEFAULTS",
    "KINDS",
    "ModelSpec",
    "TrainedModel",
    "WeightedDataset",
    "gbdt_root_gain",
    "predict_label",
    "predict_score",
    "train_classifier",
]
