"""Early fusion, sliding-window aggregation and train-only standardization.

Each window of a session yields one instance whose features are, in schema
order, ``mean`` and ``var`` for continuous columns and ``mean`` and ``chg``
(value changed inside the window) for discrete columns, followed by one
``presence__<modality>`` fraction per modality. Missing cells are ignored by
the aggregates; a column missing for the whole window aggregates to 0 and the
presence fraction carries the gap.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .dataset import EXCLUDED, TASKS, FeatureSchema, SessionData, StudyManifest, exclude_absent_frames
from .errors import ConfigError, DimensionMismatch, EmptyTrainingSet, ParseError

DROPPED = -1
_EPS = 1e-9
# gathered cells per chunk when windowing long, high-rate sessions
_CHUNK_CELLS = 2_000_000


class EmptyWindowSet(UserWarning):
    """A session produced no windows."""


@dataclass(frozen=True)
class WindowConfig:
    window_seconds: float = 3.0
    shift_seconds: float = 1.0
    min_label_fraction: float = 0.5

    def __post_init__(self):
        if not (self.window_seconds > 0 and self.shift_seconds > 0):
            raise ConfigError("window and shift must be positive")
        if self.shift_seconds > self.window_seconds:
            raise ConfigError("shift_seconds must not exceed window_seconds")
        if not 0 < self.min_label_fraction <= 1:
            raise ConfigError("min_label_fraction must lie in (0, 1]")


def derived_feature_names(schema: FeatureSchema) -> list[str]:
    names = []
    for col in schema.columns:
        second = "var" if col.kind == "continuous" else "chg"
        names += [f"{col.name}__mean", f"{col.name}__{second}"]
    names += [f"presence__{m}" for m in schema.modalities]
    return names


@dataclass(frozen=True)
class WindowInstance:
    participant_id: str
    session_index: int
    window_start: float
    features: np.ndarray
    arousal: int
    valence: int


@dataclass(eq=False)
class WindowTable:
    """All windows of one session as arrays; a label of -1 means dropped."""

    participant_id: str
    session_index: int
    starts: np.ndarray
    features: np.ndarray
    arousal: np.ndarray
    valence: np.ndarray

    def __len__(self) -> int:
        return int(self.starts.shape[0])

    def labels(self, task: str) -> np.ndarray:
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}")
        return self.arousal if task == "arousal" else self.valence

    def instances(self) -> Iterator[WindowInstance]:
        for i in range(len(self)):
            yield WindowInstance(self.participant_id, self.session_index, float(self.starts[i]),
                                 self.features[i], int(self.arousal[i]), int(self.valence[i]))

    def labelled(self, task: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Features, labels and window starts for windows that kept a label."""
        y = self.labels(task)
        keep = y != DROPPED
        return self.features[keep], y[keep].astype(np.int64), self.starts[keep]


def window_count(duration: float, cfg: WindowConfig) -> int:
    if duration + _EPS < cfg.window_seconds:
        return 0
    return int(math.floor((duration - cfg.window_seconds) / cfg.shift_seconds + _EPS)) + 1


def session_duration(session: SessionData, frame_rate_hz: float | None = None) -> float:
    """End of the span covered by the frames: last timestamp plus one frame period."""
    if len(session) == 0:
        return 0.0
    if frame_rate_hz:
        period = 1.0 / frame_rate_hz
    elif len(session) > 1:
        period = float(np.median(np.diff(session.timestamps)))
    else:
        period = 0.0
    return float(session.timestamps[-1]) + period


def window_label(labels: Sequence[int], cfg: WindowConfig = WindowConfig()) -> int | None:
    """Majority vote over non-excluded frame labels; ties go to 0.

    Returns ``None`` when fewer than ``cfg.min_label_fraction`` of the frames
    carry a label.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        return None
    ones = int(np.sum(labels == 1))
    zeros = int(np.sum(labels == 0))
    if (ones + zeros) < cfg.min_label_fraction * labels.size - _EPS:
        return None
    return 1 if ones > zeros else 0


def _window_bounds(ts: np.ndarray, n: int, cfg: WindowConfig):
    starts = np.arange(n) * cfg.shift_seconds
    lo = np.searchsorted(ts, starts - _EPS, side="left")
    hi = np.searchsorted(ts, starts + cfg.window_seconds - _EPS, side="left")
    return starts, lo, hi


def _vote(lab: np.ndarray, valid: np.ndarray, n_frames: np.ndarray, frac: float) -> np.ndarray:
    ones = ((lab == 1) & valid).sum(axis=1)
    zeros = ((lab == 0) & valid).sum(axis=1)
    out = np.where(ones > zeros, 1, 0).astype(np.int8)
    out[(ones + zeros) < frac * n_frames - _EPS] = DROPPED
    return out


def window_features(session: SessionData, cfg: WindowConfig, schema: FeatureSchema,
                    frame_rate_hz: float | None = None) -> WindowTable:
    """Slide a window over one session (grid anchored at t = 0).

    Windows that contain no frames (e.g. after excluded frames were removed)
    are skipped. An empty result emits an ``EmptyWindowSet`` warning.
    """
    m = len(schema)
    if session.values.shape[1] != m:
        raise DimensionMismatch("session columns do not match schema")
    kinds = np.array([c.kind == "continuous" for c in schema.columns])
    n_feat = 2 * m + len(schema.modalities)
    duration = session_duration(session, frame_rate_hz)
    n = window_count(duration, cfg)
    starts, lo, hi = _window_bounds(session.timestamps, n, cfg)
    nonempty = hi > lo
    starts, lo, hi = starts[nonempty], lo[nonempty], hi[nonempty]
    if starts.size == 0:
        warnings.warn(
            f"{session.participant_id} session {session.session_index}: no windows", EmptyWindowSet, stacklevel=2
        )
        empty_lab = np.zeros(0, np.int8)
        return WindowTable(session.participant_id, session.session_index, starts,
                           np.zeros((0, n_feat)), empty_lab, empty_lab.copy())

    width = int((hi - lo).max())
    feats = np.empty((starts.size, n_feat))
    aro = np.empty(starts.size, np.int8)
    val = np.empty(starts.size, np.int8)
    mod_idx = [schema.modality_indices(mod) for mod in schema.modalities]
    step = max(1, _CHUNK_CELLS // max(1, width * m))
    for a in range(0, starts.size, step):
        b = min(starts.size, a + step)
        offs = np.arange(width)
        idx = lo[a:b, None] + offs[None, :]
        slot = idx < hi[a:b, None]
        idx = np.where(slot, idx, 0)
        block = session.values[idx]  # (w, width, m)
        block = np.where(slot[:, :, None], block, np.nan)
        present = ~np.isnan(block)
        cnt = present.sum(axis=1)
        safe = np.maximum(cnt, 1)
        filled = np.where(present, block, 0.0)
        mean = filled.sum(axis=1) / safe
        dev = np.where(present, block - mean[:, None, :], 0.0)
        var = (dev * dev).sum(axis=1) / safe
        hi_val = np.where(present, block, -np.inf).max(axis=1)
        lo_val = np.where(present, block, np.inf).min(axis=1)
        changed = ((cnt > 0) & (hi_val > lo_val)).astype(np.float64)
        mean = np.where(cnt > 0, mean, 0.0)
        var = np.where(cnt > 0, var, 0.0)
        second = np.where(kinds[None, :], var, changed)
        out = feats[a:b]
        out[:, 0:2 * m:2] = mean
        out[:, 1:2 * m:2] = second
        n_frames = slot.sum(axis=1)
        for j, cols in enumerate(mod_idx):
            full = present[:, :, cols].all(axis=2) & slot
            out[:, 2 * m + j] = full.sum(axis=1) / n_frames
        lab_idx = idx
        aro[a:b] = _vote(session.arousal[lab_idx], slot & (session.arousal[lab_idx] != EXCLUDED),
                         n_frames, cfg.min_label_fraction)
        val[a:b] = _vote(session.valence[lab_idx], slot & (session.valence[lab_idx] != EXCLUDED),
                         n_frames, cfg.min_label_fraction)
    return WindowTable(session.participant_id, session.session_index, starts, feats, aro, val)


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    sd: np.ndarray
    mask: np.ndarray  # True where the training feature was constant

    @property
    def n_features(self) -> int:
        return int(self.mean.shape[0])


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        return np.atleast_2d(np.asarray(data, dtype=np.float64))
    rows = [inst.features for inst in data]
    if not rows:
        return np.zeros((0, 0))
    return np.vstack(rows).astype(np.float64)


def fit_standardizer(train) -> Standardizer:
    """Per-feature mean and population standard deviation of ``train``.

    ``train`` is a 2-D array or a sequence of ``WindowInstance``.
    """
    X = _as_matrix(train)
    if X.shape[0] == 0:
        raise EmptyTrainingSet("cannot fit a standardizer on zero instances")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    mask = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    sd = np.where(mask, 1.0, sd)
    return Standardizer(mean, sd, mask)


def apply_standardizer(std: Standardizer, instances):
    """Standardize a matrix (returned as a new matrix) or a list of instances."""
    if isinstance(instances, np.ndarray):
        X = np.atleast_2d(np.asarray(instances, dtype=np.float64))
        if X.shape[1] != std.n_features:
            raise DimensionMismatch(f"expected {std.n_features} features, got {X.shape[1]}")
        Z = (X - std.mean) / std.sd
        Z[:, std.mask] = 0.0
        return Z
    out = []
    for inst in instances:
        z = apply_standardizer(std, inst.features[None, :])[0]
        out.append(WindowInstance(inst.participant_id, inst.session_index, inst.window_start, z,
                                  inst.arousal, inst.valence))
    return out


@dataclass
class PreparedStudy:
    """Windowed tables for every session of a study, keyed by (participant, session)."""

    feature_names: list[str]
    participants: list[str]
    tables: dict[tuple[str, int], WindowTable] = field(default_factory=dict)
    excluded_frames: dict[tuple[str, int], int] = field(default_factory=dict)

    def session_counts(self) -> dict[str, int]:
        counts = {p: 0 for p in self.participants}
        for pid, k in self.tables:
            counts[pid] = max(counts[pid], k)
        return counts

    def table(self, participant_id: str, session_index: int) -> WindowTable:
        return self.tables[(participant_id, session_index)]


def preprocess_study(manifest: StudyManifest, cfg: WindowConfig = WindowConfig(),
                     drop_excluded: bool = True) -> PreparedStudy:
    study = PreparedStudy(derived_feature_names(manifest.schema), manifest.participant_ids)
    for entry in manifest.participants:
        for k in range(1, len(entry.sessions) + 1):
            session = manifest.load(entry.participant_id, k)
            removed = 0
            if drop_excluded:
                session, removed = exclude_absent_frames(session)
            study.tables[(entry.participant_id, k)] = window_features(
                session, cfg, manifest.schema, manifest.frame_rate_hz
            )
            study.excluded_frames[(entry.participant_id, k)] = removed
    return study


_LABEL_TEXT = {0: "0", 1: "1", DROPPED: "x"}
_LABEL_CODE = {"0": 0, "1": 1, "x": DROPPED}


def write_windows_csv(study: PreparedStudy, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant", "session", "window_start", "arousal", "valence", *study.feature_names])
        for pid in study.participants:
            k = 1
            while (pid, k) in study.tables:
                t = study.tables[(pid, k)]
                for i in range(len(t)):
                    writer.writerow([pid, k, repr(float(t.starts[i])), _LABEL_TEXT[int(t.arousal[i])],
                                     _LABEL_TEXT[int(t.valence[i])], *(repr(float(v)) for v in t.features[i])])
                k += 1
    return path


def read_windows_csv(path) -> PreparedStudy:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:5] != ["participant", "session", "window_start", "arousal", "valence"]:
            raise ParseError(f"{path}: not a window cache file")
        names = header[5:]
        rows: dict[tuple[str, int], list] = {}
        order: list[str] = []
        for row in reader:
            try:
                key = (row[0], int(row[1]))
                rec = (float(row[2]), _LABEL_CODE[row[3]], _LABEL_CODE[row[4]], [float(v) for v in row[5:]])
            except (ValueError, KeyError, IndexError) as exc:
                raise ParseError(f"{path}: bad row {row[:3]}: {exc}") from None
            if row[0] not in order:
                order.append(row[0])
            rows.setdefault(key, []).append(rec)
    study = PreparedStudy(names, order)
    for key, recs in rows.items():
        study.tables[key] = WindowTable(
            key[0], key[1],
            np.array([r[0] for r in recs]),
            np.array([r[3] for r in recs], dtype=np.float64).reshape(len(recs), len(names)),
            np.array([r[1] for r in recs], np.int8),
            np.array([r[2] for r in recs], np.int8),
        )
    return study
