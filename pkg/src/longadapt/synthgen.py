"""Deterministic synthetic multi-participant, multi-session studies.

Generative model, per participant ``p`` and session ``s``::

    x_t = b_p + d_{p,s} + sum_task sep_task * (y_task,t - 1/2) * R_p u_task + e_t

``u_arousal`` and ``u_valence`` are orthonormal directions in the space of the
continuous (visual + audio) columns, ``R_p`` a participant rotation whose
largest angle is ``concept_shift`` radians, ``b_p`` a participant offset of
norm ``participant_shift``, ``d_{p,s}`` a per-session random walk with step
``session_drift`` and ``e_t`` unit-variance AR(1) noise. Labels follow a
two-state Markov chain per task whose stationary negative rate is
``negative_rate[task]``. Discrete game columns are label-independent level
walks. Dropout blanks the visual or audio block in contiguous bursts.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.linalg import expm
from scipy.stats import norm

from .dataset import EXCLUDED, Column, FeatureSchema, ParticipantEntry, SessionData, StudyManifest, write_manifest, write_session
from .errors import ConfigError


@dataclass(frozen=True)
class SynthConfig:
    n_participants: int = 4
    sessions_per_participant: tuple[int, ...] = (5, 6, 4, 4)
    session_seconds: float = 300.0
    frame_rate_hz: float = 1.0
    n_visual: int = 6
    n_audio: int = 2
    n_game: int = 2
    negative_rate: dict = field(default_factory=lambda: {"arousal": 0.3, "valence": 0.2})
    class_separation: dict = field(default_factory=lambda: {"arousal": 1.0, "valence": 0.8})
    participant_shift: float = 0.5
    concept_shift: float = 0.5
    session_drift: float = 0.2
    dropout_rate: float = 0.05
    dropout_burst_seconds: float = 5.0
    label_dwell_seconds: float = 6.0
    noise_autocorr: float = 0.3
    exclusion_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        sessions = tuple(int(s) for s in self.sessions_per_participant)
        if len(sessions) == 1 and self.n_participants > 1:
            sessions = sessions * self.n_participants
        object.__setattr__(self, "sessions_per_participant", sessions)
        if self.n_participants < 1 or len(sessions) != self.n_participants or min(sessions) < 1:
            raise ConfigError("need one positive session count per participant")
        if not (self.session_seconds > 0 and self.frame_rate_hz > 0):
            raise ConfigError("session_seconds and frame_rate_hz must be positive")
        if self.n_visual < 0 or self.n_audio < 0 or self.n_game < 0 or self.n_visual + self.n_audio < 2:
            raise ConfigError("need at least two continuous (visual + audio) features")
        for task in ("arousal", "valence"):
            if task not in self.negative_rate or task not in self.class_separation:
                raise ConfigError(f"negative_rate and class_separation need an entry for {task}")
            if not 0 < float(self.negative_rate[task]) < 1:
                raise ConfigError("negative rates must lie in (0, 1)")
            if not float(self.class_separation[task]) >= 0:
                raise ConfigError("class separation must be non-negative")
        for name in ("participant_shift", "concept_shift", "session_drift"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0 <= self.dropout_rate < 1 or not 0 <= self.exclusion_rate < 1:
            raise ConfigError("dropout_rate and exclusion_rate must lie in [0, 1)")
        if not (self.dropout_burst_seconds > 0 and self.label_dwell_seconds > 0):
            raise ConfigError("burst and dwell durations must be positive")
        if not -1 < self.noise_autocorr < 1:
            raise ConfigError("noise_autocorr must lie in (-1, 1)")
        if not 0 <= int(self.seed) < 2**63:
            raise ConfigError("seed must be a non-negative integer")

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known - {"out_dir"}
        if extra:
            raise ConfigError(f"unknown synth config keys: {sorted(extra)}")
        try:
            return cls(**{k: v for k, v in doc.items() if k in known})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["sessions_per_participant"] = list(self.sessions_per_participant)
        return doc

    @property
    def n_continuous(self) -> int:
        return self.n_visual + self.n_audio


def build_schema(cfg: SynthConfig) -> FeatureSchema:
    cols = [Column(f"vis_{i}", "visual", "continuous") for i in range(cfg.n_visual)]
    cols += [Column(f"aud_{i}", "audio", "continuous") for i in range(cfg.n_audio)]
    cols += [Column(f"game_{i}", "game", "discrete") for i in range(cfg.n_game)]
    return FeatureSchema(tuple(cols))


def participant_ids(cfg: SynthConfig) -> list[str]:
    return [f"P{i + 1}" for i in range(cfg.n_participants)]


@dataclass(frozen=True)
class _Participant:
    rotation: np.ndarray
    offset: np.ndarray
    drifts: tuple[np.ndarray, ...]


def _directions(cfg: SynthConfig) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 0])
    q, _ = np.linalg.qr(rng.standard_normal((cfg.n_continuous, 2)))
    return q.T  # rows: arousal, valence


def _participant(cfg: SynthConfig, p: int) -> _Participant:
    rng = np.random.default_rng([cfg.seed, 1, p])
    k = cfg.n_continuous
    a = rng.standard_normal((k, k))
    skew = a - a.T
    skew /= np.linalg.norm(skew, 2)
    rotation = expm(cfg.concept_shift * skew)
    u = rng.standard_normal(k)
    offset = cfg.participant_shift * u / np.linalg.norm(u)
    drifts, d = [], np.zeros(k)
    for _ in range(cfg.sessions_per_participant[p]):
        drifts.append(d.copy())
        d = d + cfg.session_drift * rng.standard_normal(k) / math.sqrt(k)
    return _Participant(rotation, offset, tuple(drifts))


def _markov_labels(rng, n: int, neg_rate: float, dwell_frames: float) -> np.ndarray:
    """Two-state chain with stationary P(0) = neg_rate and mean negative run ``dwell_frames``."""
    q01 = min(1.0, 1.0 / max(dwell_frames, 1.0))
    q10 = min(1.0, q01 * neg_rate / (1.0 - neg_rate))
    out = np.empty(n, dtype=np.int8)
    state = 0 if rng.random() < neg_rate else 1
    i = 0
    while i < n:
        run = int(rng.geometric(q01 if state == 0 else q10))
        out[i:i + run] = state
        i += run
        state = 1 - state
    return out


def _bursts(rng, n: int, rate: float, mean_len: float) -> np.ndarray:
    """Boolean mask covering roughly ``rate`` of the frames in geometric bursts."""
    mask = np.zeros(n, dtype=bool)
    if rate <= 0:
        return mask
    mean_len = max(mean_len, 1.0)
    p_start = rate / ((1.0 - rate) * mean_len)
    i = 0
    while i < n:
        gap = int(rng.geometric(min(1.0, p_start)))
        i += gap - 1
        if i >= n:
            break
        run = int(rng.geometric(1.0 / mean_len))
        mask[i:i + run] = True
        i += run
    return mask


def _ar1(rng, n: int, k: int, rho: float) -> np.ndarray:
    eta = rng.standard_normal((n, k))
    out = np.empty_like(eta)
    out[0] = eta[0]
    scale = math.sqrt(1.0 - rho * rho)
    for t in range(1, n):
        out[t] = rho * out[t - 1] + scale * eta[t]
    return out


def _game_levels(rng, n: int, k: int) -> np.ndarray:
    out = np.empty((n, k))
    for j in range(k):
        level = int(rng.integers(0, 5))
        steps = rng.random(n) < 0.02
        moves = rng.choice((-1, 1), size=n)
        for t in range(n):
            if steps[t]:
                level = min(4, max(0, level + int(moves[t])))
            out[t, j] = level
    return out


def simulate_session(cfg: SynthConfig, p: int, s: int) -> SessionData:
    """Frames for participant index ``p`` (0-based) and session index ``s`` (1-based)."""
    rng = np.random.default_rng([cfg.seed, 2, p, s])
    part = _participant(cfg, p)
    dirs = _directions(cfg) @ part.rotation.T
    n = int(round(cfg.session_seconds * cfg.frame_rate_hz))
    dwell = cfg.label_dwell_seconds * cfg.frame_rate_hz
    labels = {
        task: _markov_labels(rng, n, float(cfg.negative_rate[task]), dwell) for task in ("arousal", "valence")
    }
    cont = _ar1(rng, n, cfg.n_continuous, cfg.noise_autocorr)
    cont += part.offset + part.drifts[s - 1]
    for row, task in enumerate(("arousal", "valence")):
        sep = float(cfg.class_separation[task])
        cont += sep * (labels[task][:, None] - 0.5) * dirs[row][None, :]
    burst_len = cfg.dropout_burst_seconds * cfg.frame_rate_hz
    if cfg.n_visual:
        cont[_bursts(rng, n, cfg.dropout_rate, burst_len), :cfg.n_visual] = np.nan
    if cfg.n_audio:
        cont[_bursts(rng, n, cfg.dropout_rate, burst_len), cfg.n_visual:] = np.nan
    values = np.hstack([cont, _game_levels(rng, n, cfg.n_game)])
    excluded = _bursts(rng, n, cfg.exclusion_rate, 5.0 * cfg.frame_rate_hz)
    aro = np.where(excluded, EXCLUDED, labels["arousal"])
    val = np.where(excluded, EXCLUDED, labels["valence"])
    ts = np.arange(n) / cfg.frame_rate_hz
    return SessionData(participant_ids(cfg)[p], s, ts, values, aro, val)


def generate_study(cfg: SynthConfig, out_dir) -> tuple[StudyManifest, list[Path]]:
    """Write ``manifest.json`` and one CSV per session under ``out_dir``."""
    out_dir = Path(out_dir)
    (out_dir / "sessions").mkdir(parents=True, exist_ok=True)
    schema = build_schema(cfg)
    entries, paths = [], []
    for p, pid in enumerate(participant_ids(cfg)):
        rels = []
        for s in range(1, cfg.sessions_per_participant[p] + 1):
            rel = Path("sessions") / f"{pid}_S{s}.csv"
            write_session(simulate_session(cfg, p, s), schema, out_dir / rel)
            rels.append(rel)
            paths.append(out_dir / rel)
        entries.append(ParticipantEntry(pid, tuple(rels)))
    manifest = StudyManifest(schema, tuple(entries), float(cfg.frame_rate_hz), root=out_dir)
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest, paths


def bayes_auroc(cfg: SynthConfig, participant: int | str = 0, task: str = "arousal",
                window_seconds: float = 3.0) -> float:
    """AUROC of the Bayes-optimal linear score for a label-pure window.

    Frames in a window share the class mean and carry AR(1) noise with
    correlation matrix ``Omega``; the optimal statistic then has Mahalanobis
    separation ``sep * sqrt(1' Omega^-1 1)`` and AUROC ``Phi(sep_eff / sqrt 2)``.
    Session drift is ignored, so the value bounds learned models on studies
    generated without drift.
    """
    ids = participant_ids(cfg)
    if isinstance(participant, str):
        if participant not in ids:
            raise ConfigError(f"unknown participant {participant!r}")
    elif not 0 <= participant < cfg.n_participants:
        raise ConfigError(f"participant index {participant} out of range")
    if task not in cfg.class_separation:
        raise ConfigError(f"unknown task {task!r}")
    sep = float(cfg.class_separation[task])
    m = max(1, int(math.floor(window_seconds * cfg.frame_rate_hz + 1e-9)))
    lags = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    omega = cfg.noise_autocorr ** lags
    gain = float(np.ones(m) @ np.linalg.solve(omega, np.ones(m)))
    return float(norm.cdf(sep * math.sqrt(gain) / math.sqrt(2.0)))


def load_config(path, seed: int | None = None) -> tuple[SynthConfig, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if seed is not None:
        doc["seed"] = int(seed)
    return SynthConfig.from_dict(doc), doc
