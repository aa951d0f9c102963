"""Study data model: feature schema, per-session frame tables and manifests.

Session files are CSV with header ``timestamp,arousal,valence,<features...>``.
Labels are ``0``, ``1`` or ``x`` (excluded); an empty feature cell is missing.
Missing values are held as NaN in memory; non-finite numbers in a file are
rejected so NaN never means anything else.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    ColumnMismatch,
    MissingSession,
    NonMonotonicTimestamps,
    ParseError,
    SchemaError,
)

MODALITIES = ("visual", "audio", "game")
KINDS = ("continuous", "discrete")
TASKS = ("arousal", "valence")
EXCLUDED = -1

_LABEL_CODES = {"0": 0, "1": 1, "x": EXCLUDED}
_LABEL_TEXT = {0: "0", 1: "1", EXCLUDED: "x"}


@dataclass(frozen=True)
class Column:
    name: str
    modality: str
    kind: str


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        if not self.columns:
            raise SchemaError("schema has no columns")
        seen = set()
        for col in self.columns:
            if col.name in seen:
                raise SchemaError(f"duplicate column name {col.name!r}")
            seen.add(col.name)
            if col.modality not in MODALITIES:
                raise SchemaError(f"column {col.name!r}: unknown modality {col.modality!r}")
            if col.kind not in KINDS:
                raise SchemaError(f"column {col.name!r}: unknown kind {col.kind!r}")
            if col.name in ("timestamp", "arousal", "valence"):
                raise SchemaError(f"column name {col.name!r} is reserved")

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "FeatureSchema":
        try:
            cols = tuple(Column(str(r["name"]), str(r["modality"]), str(r["kind"])) for r in records)
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad schema entry: {exc}") from exc
        return cls(cols)

    def to_records(self) -> list[dict]:
        return [{"name": c.name, "modality": c.modality, "kind": c.kind} for c in self.columns]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def __len__(self) -> int:
        return len(self.columns)

    @property
    def modalities(self) -> tuple[str, ...]:
        """Modalities present in the schema, in canonical order."""
        present = {c.modality for c in self.columns}
        return tuple(m for m in MODALITIES if m in present)

    def counts(self) -> dict[str, int]:
        return {m: sum(c.modality == m for c in self.columns) for m in self.modalities}

    def modality_indices(self, modality: str) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.columns) if c.modality == modality], dtype=np.intp)


class FrameRecord(NamedTuple):
    timestamp: float
    values: tuple[float, ...]
    arousal: int
    valence: int


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SessionData:
    """One chronologically ordered recording of a participant.

    ``values`` is ``(T, M)`` with NaN for missing cells; labels are int8 arrays
    with ``EXCLUDED`` (-1) for excluded frames.
    """

    participant_id: str
    session_index: int
    timestamps: np.ndarray
    values: np.ndarray
    arousal: np.ndarray
    valence: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != ts.shape[0]:
            vals = vals.reshape(ts.shape[0], -1)
        aro = np.asarray(self.arousal, dtype=np.int8).reshape(-1)
        val = np.asarray(self.valence, dtype=np.int8).reshape(-1)
        if aro.shape != ts.shape or val.shape != ts.shape:
            raise ParseError("label arrays must match the number of frames")
        if self.session_index < 1:
            raise ParseError("session_index must be a positive integer")
        if ts.size and (ts[0] < 0 or not np.all(np.isfinite(ts))):
            raise ParseError("timestamps must be finite and non-negative")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise NonMonotonicTimestamps(
                f"{self.participant_id} session {self.session_index}: timestamps not strictly increasing"
            )
        for lab in (aro, val):
            if not np.all(np.isin(lab, (0, 1, EXCLUDED))):
                raise ParseError("labels must be 0, 1 or excluded")
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "arousal", _frozen(aro))
        object.__setattr__(self, "valence", _frozen(val))

    def __len__(self) -> int:
        return int(self.timestamps.shape[0])

    def labels(self, task: str) -> np.ndarray:
        if task == "arousal":
            return self.arousal
        if task == "valence":
            return self.valence
        raise ValueError(f"unknown task {task!r}")

    def frames(self) -> Iterator[FrameRecord]:
        for i in range(len(self)):
            yield FrameRecord(
                float(self.timestamps[i]),
                tuple(float(v) for v in self.values[i]),
                int(self.arousal[i]),
                int(self.valence[i]),
            )

    @classmethod
    def from_frames(cls, participant_id: str, session_index: int, frames: Sequence[FrameRecord], n_columns: int):
        if not frames:
            return cls(participant_id, session_index, np.zeros(0), np.zeros((0, n_columns)),
                       np.zeros(0, np.int8), np.zeros(0, np.int8))
        for fr in frames:
            if len(fr.values) != n_columns:
                raise ColumnMismatch("frame value count does not match the schema")
        return cls(
            participant_id,
            session_index,
            np.array([f.timestamp for f in frames]),
            np.array([f.values for f in frames], dtype=np.float64),
            np.array([f.arousal for f in frames], dtype=np.int8),
            np.array([f.valence for f in frames], dtype=np.int8),
        )

    def subset(self, mask: np.ndarray) -> "SessionData":
        return SessionData(
            self.participant_id,
            self.session_index,
            self.timestamps[mask],
            self.values[mask],
            self.arousal[mask],
            self.valence[mask],
        )

    def same_as(self, other: "SessionData") -> bool:
        """Exact equality, treating missing cells as equal to each other."""
        return (
            self.participant_id == other.participant_id
            and self.session_index == other.session_index
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.arousal, other.arousal)
            and np.array_equal(self.valence, other.valence)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass(frozen=True)
class ParticipantEntry:
    participant_id: str
    sessions: tuple[Path, ...]


@dataclass(frozen=True)
class StudyManifest:
    schema: FeatureSchema
    participants: tuple[ParticipantEntry, ...]
    frame_rate_hz: float
    root: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        if not self.participants:
            raise ParseError("manifest lists no participants")
        ids = [p.participant_id for p in self.participants]
        if len(set(ids)) != len(ids):
            raise ParseError("participant ids must be unique")
        for p in self.participants:
            if not p.sessions:
                raise ParseError(f"participant {p.participant_id!r} has no sessions")
        if not (self.frame_rate_hz > 0 and math.isfinite(self.frame_rate_hz)):
            raise ParseError("frame_rate_hz must be a positive number")

    @property
    def participant_ids(self) -> list[str]:
        return [p.participant_id for p in self.participants]

    def session_counts(self) -> dict[str, int]:
        return {p.participant_id: len(p.sessions) for p in self.participants}

    def session_path(self, participant_id: str, session_index: int) -> Path:
        entry = self._entry(participant_id)
        if not 1 <= session_index <= len(entry.sessions):
            raise MissingSession(f"{participant_id} has no session {session_index}")
        return self.root / entry.sessions[session_index - 1]

    def _entry(self, participant_id: str) -> ParticipantEntry:
        for p in self.participants:
            if p.participant_id == participant_id:
                return p
        raise KeyError(participant_id)

    def load(self, participant_id: str, session_index: int) -> SessionData:
        return load_session(
            self.session_path(participant_id, session_index),
            self.schema,
            participant_id=participant_id,
            session_index=session_index,
        )


def load_manifest(path) -> StudyManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ParseError(f"manifest not found: {path}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("manifest must be a JSON object")
    for key in ("schema", "participants", "frame_rate_hz"):
        if key not in doc:
            raise ParseError(f"manifest missing key {key!r}")
    schema = FeatureSchema.from_records(doc["schema"])
    entries = []
    try:
        for rec in doc["participants"]:
            entries.append(ParticipantEntry(str(rec["id"]), tuple(Path(s) for s in rec["sessions"])))
        rate = float(doc["frame_rate_hz"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad participants entry: {exc}") from exc
    manifest = StudyManifest(schema, tuple(entries), rate, root=path.parent)
    for entry in manifest.participants:
        for rel in entry.sessions:
            if not (manifest.root / rel).is_file():
                raise MissingSession(f"{entry.participant_id}: session file {rel} not found")
    return manifest


def write_manifest(manifest: StudyManifest, path) -> Path:
    path = Path(path)
    doc = {
        "schema": manifest.schema.to_records(),
        "participants": [
            {"id": p.participant_id, "sessions": [s.as_posix() for s in p.sessions]}
            for p in manifest.participants
        ],
        "frame_rate_hz": manifest.frame_rate_hz,
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def _parse_float(text: str, where: str) -> float:
    try:
        x = float(text)
    except ValueError as exc:
        raise ParseError(f"{where}: not a number: {text!r}") from exc
    if not math.isfinite(x):
        raise ParseError(f"{where}: non-finite value {text!r}")
    return x


def load_session(path, schema: FeatureSchema, participant_id: str = "", session_index: int = 1,
                 sort: bool = False) -> SessionData:
    """Read a session CSV.

    With ``sort=True`` rows are reordered by timestamp before validation;
    otherwise out-of-order rows raise ``NonMonotonicTimestamps``.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except FileNotFoundError as exc:
        raise MissingSession(str(path)) from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        expected = ["timestamp", "arousal", "valence", *schema.names]
        if header != expected:
            raise ColumnMismatch(f"{path}: header does not match schema")
        m = len(schema)
        ts, aro, val, rows = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{path}:{lineno}"
            if len(row) != m + 3:
                raise ParseError(f"{where}: expected {m + 3} fields, got {len(row)}")
            ts.append(_parse_float(row[0], where))
            try:
                aro.append(_LABEL_CODES[row[1]])
                val.append(_LABEL_CODES[row[2]])
            except KeyError as exc:
                raise ParseError(f"{where}: bad label {exc}") from None
            rows.append([math.nan if cell == "" else _parse_float(cell, where) for cell in row[3:]])
    ts_arr = np.array(ts, dtype=np.float64)
    vals = np.array(rows, dtype=np.float64).reshape(len(rows), m)
    aro_arr = np.array(aro, dtype=np.int8)
    val_arr = np.array(val, dtype=np.int8)
    if sort:
        order = np.argsort(ts_arr, kind="stable")
        ts_arr, vals, aro_arr, val_arr = ts_arr[order], vals[order], aro_arr[order], val_arr[order]
    try:
        return SessionData(participant_id, session_index, ts_arr, vals, aro_arr, val_arr)
    except NonMonotonicTimestamps as exc:
        raise NonMonotonicTimestamps(f"{path}: {exc}") from None


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_session(session: SessionData, schema: FeatureSchema, path) -> Path:
    path = Path(path)
    if session.values.shape[1] != len(schema):
        raise ColumnMismatch("session column count does not match schema")
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "arousal", "valence", *schema.names])
        for i in range(len(session)):
            writer.writerow(
                [repr(float(session.timestamps[i])), _LABEL_TEXT[int(session.arousal[i])],
                 _LABEL_TEXT[int(session.valence[i])], *(_fmt(v) for v in session.values[i])]
            )
    return path


def exclude_absent_frames(session: SessionData) -> tuple[SessionData, int]:
    """Drop frames whose arousal or valence label is excluded.

    Returns the filtered session and the number of frames removed.
    """
    keep = (session.arousal != EXCLUDED) & (session.valence != EXCLUDED)
    removed = int(len(session) - keep.sum())
    if removed == 0:
        return session, 0
    return session.subset(keep), removed
