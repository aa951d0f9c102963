"""Supervised adaptation by loss reweighting, and CORAL as the unsupervised baseline.

Convention: ``alpha`` weights the *target* (the test participant's own past
data) and ``1 - alpha`` the pooled source participants, so ``alpha = 1`` is the
individualized endpoint and ``alpha = 0`` the generic one.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analysis.metrics import auroc, error_rate
from .classifiers import ModelSpec
from .errors import (
    ConfigError,
    DegenerateCovariance,
    DimensionMismatch,
    EmptyBothDomains,
    EmptyData,
    SingleClassData,
    SingleClassTarget,
    TooFewTargetInstances,
    UnweightableModelKind,
)
from .fitting import ScaledModel, fit_scaled
from .preprocess import apply_standardizer, fit_standardizer

DEFAULT_ALPHA_GRID = tuple(i / 10 for i in range(11))
FOLD_STRATEGIES = ("contiguous", "stratified-random")
SELECTION_METRICS = ("auroc", "error")


@dataclass(frozen=True)
class AdaptationConfig:
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    cv_folds: int = 5
    fold_strategy: str = "contiguous"
    selection_metric: str = "auroc"
    seed: int = 0
    coral_ridge: float = 1.0

    def __post_init__(self):
        grid = tuple(float(a) for a in self.alpha_grid)
        if not grid:
            raise ConfigError("alpha_grid is empty")
        if any(not 0.0 <= a <= 1.0 for a in grid):
            raise ConfigError("alpha values must lie in [0, 1]")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("alpha_grid must be sorted and distinct")
        if int(self.cv_folds) < 2:
            raise ConfigError("cv_folds must be at least 2")
        if self.fold_strategy not in FOLD_STRATEGIES:
            raise ConfigError(f"fold_strategy must be one of {FOLD_STRATEGIES}")
        if self.selection_metric not in SELECTION_METRICS:
            raise ConfigError(f"selection_metric must be one of {SELECTION_METRICS}")
        if not self.coral_ridge >= 0:
            raise ConfigError("coral_ridge must be non-negative")
        object.__setattr__(self, "alpha_grid", grid)


@dataclass
class AlphaSearchResult:
    alpha_grid: list[float]
    metric_mean: list[float]
    metric_std: list[float]
    chosen_alpha: float
    folds: int
    metric_name: str
    fold_metrics: list[list[float]] = field(default_factory=list)

    def to_json(self) -> str:
        doc = asdict(self)
        doc.pop("fold_metrics")
        return json.dumps(_nan_to_none(doc), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AlphaSearchResult":
        doc = json.loads(text)
        for key in ("metric_mean", "metric_std"):
            doc[key] = [float("nan") if v is None else v for v in doc[key]]
        return cls(**doc)

    @property
    def chosen_metric(self) -> float:
        return self.metric_mean[self.alpha_grid.index(self.chosen_alpha)]


def _nan_to_none(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    return obj


def reweight(n_target: int, n_source: int, alpha: float) -> tuple[float, float]:
    """Per-instance weights for target and source rows.

    Raw weights are ``alpha / n_target`` and ``(1 - alpha) / n_source``; they
    are rescaled so the total weight equals ``n_target + n_source``. The
    weighted sum of losses is then ``N * (alpha * mean_target_loss +
    (1 - alpha) * mean_source_loss)`` with ``N = n_target + n_source``.
    """
    if n_target < 0 or n_source < 0:
        raise ValueError("counts must be non-negative")
    if n_target == 0 and n_source == 0:
        raise EmptyBothDomains("both domains are empty")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    total = n_target + n_source
    raw_t = alpha / n_target if n_target else 0.0
    raw_s = (1.0 - alpha) / n_source if n_source else 0.0
    mass = raw_t * n_target + raw_s * n_source
    if mass == 0.0:
        return 0.0, 0.0
    if n_target and n_source:
        # the raw weights already sum to one
        return raw_t * total, raw_s * total
    return raw_t * total / mass, raw_s * total / mass


def choose_alpha(alpha_grid: Sequence[float], metric_mean: Sequence[float], higher_is_better: bool = True) -> float:
    """Best mean metric; equal means resolve toward the larger alpha. NaN entries never win."""
    best_alpha, best = None, None
    for a, m in zip(alpha_grid, metric_mean):
        if m != m:
            continue
        if best is None or (m >= best if higher_is_better else m <= best):
            best_alpha, best = a, m
    if best_alpha is None:
        return float(max(alpha_grid))
    return float(best_alpha)


def make_folds(y: np.ndarray, cfg: AdaptationConfig) -> list[np.ndarray]:
    n = y.shape[0]
    if cfg.fold_strategy == "contiguous":
        return [f for f in np.array_split(np.arange(n), cfg.cv_folds)]
    rng = np.random.default_rng(cfg.seed)
    assign = np.empty(n, dtype=np.int64)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        assign[idx] = np.arange(idx.size) % cfg.cv_folds
    return [np.flatnonzero(assign == f) for f in range(cfg.cv_folds)]


def _stack(target_X, target_y, source_X, source_y, alpha):
    wt, ws = reweight(target_y.size, source_y.size, alpha)
    X = np.vstack([target_X, source_X])
    y = np.concatenate([target_y, source_y])
    w = np.concatenate([np.full(target_y.size, wt), np.full(source_y.size, ws)])
    return X, y, w


def select_alpha(source: tuple[np.ndarray, np.ndarray], target: tuple[np.ndarray, np.ndarray], spec: ModelSpec,
                 cfg: AdaptationConfig = AdaptationConfig(),
                 fold_metric: Callable[[float, int], float] | None = None,
                 workers: int = 1) -> AlphaSearchResult:
    """Cross-validate every alpha on the target data.

    Each fold of the target is held out in turn; the model trains on the
    source plus the remaining target rows with :func:`reweight` weights. Folds
    whose held-out part lacks a class are skipped for every alpha when the
    metric is AUROC; if no fold qualifies, pooled out-of-fold AUROC is used.
    An alpha whose model cannot be trained on some fold gets a NaN mean and is
    never chosen.
    ``fold_metric(alpha, fold)`` replaces training and scoring when given.
    """
    Xs, ys = np.asarray(source[0], dtype=np.float64), np.asarray(source[1])
    Xt, yt = np.asarray(target[0], dtype=np.float64), np.asarray(target[1])
    if not spec.weightable:
        raise UnweightableModelKind(f"{spec.kind} cannot be trained with instance weights")
    if yt.size < cfg.cv_folds:
        raise TooFewTargetInstances(f"{yt.size} target instances for {cfg.cv_folds} folds")
    if np.all(yt == yt[0]):
        raise SingleClassTarget("target data contains a single class")
    folds = make_folds(yt, cfg)
    use_auroc = cfg.selection_metric == "auroc"
    valid = [f for f, idx in enumerate(folds) if not use_auroc or np.unique(yt[idx]).size == 2]
    pooled = use_auroc and not valid and fold_metric is None
    if pooled:
        valid = list(range(len(folds)))

    def run(cell):
        alpha, f = cell
        if fold_metric is not None:
            return float(fold_metric(alpha, f))
        held = folds[f]
        keep = np.ones(yt.size, dtype=bool)
        keep[held] = False
        X, y, w = _stack(Xt[keep], yt[keep], Xs, ys, alpha)
        try:
            scores = fit_scaled(spec, X, y, w).scores(Xt[held])
        except (EmptyData, SingleClassData):
            # e.g. alpha = 1 on a single-class remainder: this alpha is not trainable here
            return None if pooled else float("nan")
        if pooled:
            return scores
        if use_auroc:
            return auroc(scores, yt[held])
        return error_rate(scores, yt[held])

    cells = [(a, f) for a in cfg.alpha_grid for f in valid]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, cells))
    else:
        outcomes = [run(c) for c in cells]
    per_alpha = [outcomes[i * len(valid):(i + 1) * len(valid)] for i in range(len(cfg.alpha_grid))]
    if pooled:
        order = np.concatenate([folds[f] for f in valid])
        per_alpha = [[float("nan") if any(p is None for p in parts) else auroc(np.concatenate(parts), yt[order])]
                     for parts in per_alpha]
    means = [float(np.mean(v)) for v in per_alpha]
    stds = [float(np.std(v)) for v in per_alpha]
    chosen = choose_alpha(cfg.alpha_grid, means, higher_is_better=use_auroc)
    return AlphaSearchResult(list(cfg.alpha_grid), means, stds, chosen, len(valid), cfg.selection_metric,
                             [list(map(float, v)) for v in per_alpha])


def train_personalized(source: tuple[np.ndarray, np.ndarray],
                       target_sessions: Sequence[tuple[np.ndarray, np.ndarray]],
                       spec: ModelSpec, cfg: AdaptationConfig = AdaptationConfig(),
                       workers: int = 1) -> tuple[ScaledModel, AlphaSearchResult]:
    """Pool the target sessions seen so far, pick alpha, refit on everything.

    A single-value grid skips cross-validation and uses that alpha directly.
    """
    Xt = np.vstack([np.asarray(X, dtype=np.float64) for X, _ in target_sessions])
    yt = np.concatenate([np.asarray(y) for _, y in target_sessions])
    Xs, ys = np.asarray(source[0], dtype=np.float64), np.asarray(source[1])
    if len(cfg.alpha_grid) == 1:
        if not spec.weightable:
            raise UnweightableModelKind(f"{spec.kind} cannot be trained with instance weights")
        nan = float("nan")
        search = AlphaSearchResult(list(cfg.alpha_grid), [nan], [nan], cfg.alpha_grid[0], 0, cfg.selection_metric)
    else:
        search = select_alpha((Xs, ys), (Xt, yt), spec, cfg, workers=workers)
    X, y, w = _stack(Xt, yt, Xs, ys, search.chosen_alpha)
    return fit_scaled(spec, X, y, w), search


def _sqrt_pair(C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(C)
    vals = np.clip(vals, 0.0, None)
    root = np.sqrt(vals)
    inv_root = np.where(root > 0, 1.0 / np.where(root > 0, root, 1.0), 0.0)
    return (vecs * root) @ vecs.T, (vecs * inv_root) @ vecs.T


def coral_matrix(source_X, target_X, ridge: float = 1.0) -> np.ndarray:
    """Linear map ``A = C_s^(-1/2) C_t^(1/2)`` with ridge-regularized covariances."""
    Xs = np.asarray(source_X, dtype=np.float64)
    Xt = np.asarray(target_X, dtype=np.float64)
    if Xs.ndim != 2 or Xt.ndim != 2 or Xs.shape[1] != Xt.shape[1]:
        raise DimensionMismatch("source and target need the same number of columns")
    if Xs.shape[0] < 2 or Xt.shape[0] < 2:
        raise DimensionMismatch("CORAL needs at least two rows per domain")
    if not (np.all(np.isfinite(Xs)) and np.all(np.isfinite(Xt))):
        raise DegenerateCovariance("non-finite input to CORAL")
    eye = np.eye(Xs.shape[1])
    Cs = np.cov(Xs, rowvar=False).reshape(eye.shape) + ridge * eye
    Ct = np.cov(Xt, rowvar=False).reshape(eye.shape) + ridge * eye
    _, cs_inv_root = _sqrt_pair(Cs)
    ct_root, _ = _sqrt_pair(Ct)
    return cs_inv_root @ ct_root


def coral_align(source_X, target_X, ridge: float = 1.0) -> np.ndarray:
    """Re-colour the source features with the target's second-order statistics."""
    return np.asarray(source_X, dtype=np.float64) @ coral_matrix(source_X, target_X, ridge)


def train_personalized_uda(source: tuple[np.ndarray, np.ndarray], target_X: np.ndarray, spec: ModelSpec,
                           ridge: float = 1.0) -> ScaledModel:
    """Train on CORAL-aligned source features; target labels are never touched.

    Both domains are standardized with source statistics before alignment; the
    returned model scores target rows through that same standardizer.
    """
    Xs, ys = np.asarray(source[0], dtype=np.float64), np.asarray(source[1])
    std = fit_standardizer(Xs)
    Zs = apply_standardizer(std, Xs)
    Zt = apply_standardizer(std, np.asarray(target_X, dtype=np.float64))
    aligned = coral_align(Zs, Zt, ridge)
    inner = fit_scaled(spec, aligned, ys)
    return _ComposedModel(std, inner)


@dataclass(frozen=True, eq=False)
class _ComposedModel:
    standardizer: object
    inner: ScaledModel

    def scores(self, X: np.ndarray) -> np.ndarray:
        return self.inner.scores(apply_standardizer(self.standardizer, X))
