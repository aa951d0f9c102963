import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from longadapt.dataset import (
    EXCLUDED, Column, FeatureSchema, ParticipantEntry, SessionData, StudyManifest, exclude_absent_frames,
    load_manifest, load_session, write_manifest, write_session,
)
from longadapt.errors import ColumnMismatch, MissingSession, NonMonotonicTimestamps, ParseError, SchemaError

SCHEMA = FeatureSchema((Column("gaze_x", "visual", "continuous"), Column("pitch", "audio", "continuous"),
                        Column("level", "game", "discrete")))
HEADER = "timestamp,arousal,valence,gaze_x,pitch,level\n"


def write_csv(path, body):
    path.write_text(HEADER + body)
    return path


def session(n=10, excluded=()):
    aro = np.ones(n, dtype=np.int8)
    aro[list(excluded)] = EXCLUDED
    return SessionData("P1", 1, np.arange(n, dtype=float), np.arange(3 * n, dtype=float).reshape(n, 3),
                       aro, np.zeros(n, dtype=np.int8))


def test_schema_validation_and_counts():
    assert SCHEMA.counts() == {"visual": 1, "audio": 1, "game": 1}
    with pytest.raises(SchemaError):
        FeatureSchema((Column("gaze_x", "visual", "continuous"), Column("gaze_x", "visual", "continuous")))
    with pytest.raises(SchemaError):
        FeatureSchema((Column("a", "smell", "continuous"),))
    big = FeatureSchema(tuple(Column(f"v{i}", "visual", "continuous") for i in range(115))
                        + tuple(Column(f"a{i}", "audio", "continuous") for i in range(6))
                        + tuple(Column(f"g{i}", "game", "discrete") for i in range(16)))
    assert big.counts() == {"visual": 115, "audio": 6, "game": 16}


def test_load_session_basic(tmp_path):
    p = write_csv(tmp_path / "s.csv", "0,1,0,0.5,1.0,2\n1,0,1,,2.0,2\n2,x,1,0.7,3.0,3\n")
    s = load_session(p, SCHEMA)
    assert len(s) == 3
    assert np.isnan(s.values[1, 0])
    assert list(s.arousal) == [1, 0, EXCLUDED]


def test_load_session_errors(tmp_path):
    with pytest.raises(NonMonotonicTimestamps):
        load_session(write_csv(tmp_path / "a.csv", "0,1,1,1,1,1\n2,1,1,1,1,1\n1,1,1,1,1,1\n"), SCHEMA)
    bad = tmp_path / "b.csv"
    bad.write_text("timestamp,arousal,valence,gaze_x,level,pitch\n")
    with pytest.raises(ColumnMismatch):
        load_session(bad, SCHEMA)
    with pytest.raises(ParseError):
        load_session(write_csv(tmp_path / "c.csv", "0,2,1,1,1,1\n"), SCHEMA)
    with pytest.raises(ParseError):
        load_session(write_csv(tmp_path / "d.csv", "0,1,1,abc,1,1\n"), SCHEMA)


def test_load_session_sort_option(tmp_path):
    p = write_csv(tmp_path / "a.csv", "0,1,1,1,1,1\n2,0,1,3,1,1\n1,1,0,2,1,1\n")
    s = load_session(p, SCHEMA, sort=True)
    assert list(s.timestamps) == [0.0, 1.0, 2.0]
    assert list(s.values[:, 0]) == [1.0, 2.0, 3.0]


def test_session_arrays_are_read_only():
    s = session()
    with pytest.raises(ValueError):
        s.values[0, 0] = 5.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_session_round_trip(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 20))
    ts = np.cumsum(rng.uniform(0.01, 2.0, n)) - 0.005
    vals = rng.normal(size=(n, 3)) * 10.0 ** rng.integers(-5, 5)
    vals[rng.random((n, 3)) < 0.2] = np.nan
    s = SessionData("P", 2, ts, vals, rng.choice([0, 1, EXCLUDED], n).astype(np.int8),
                    rng.choice([0, 1, EXCLUDED], n).astype(np.int8))
    path = tmp_path_factory.mktemp("rt") / "s.csv"
    write_session(s, SCHEMA, path)
    back = load_session(path, SCHEMA, "P", 2)
    assert back.same_as(s)


def test_manifest_round_trip_and_errors(tmp_path):
    for pid in ("P1", "P2"):
        for k in (1, 2):
            write_csv(tmp_path / f"{pid}_{k}.csv", "0,1,1,1,1,1\n")
    doc = {"schema": SCHEMA.to_records(), "frame_rate_hz": 1.0,
           "participants": [{"id": p, "sessions": [f"{p}_1.csv", f"{p}_2.csv"]} for p in ("P1", "P2")]}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    m = load_manifest(tmp_path / "m.json")
    assert sum(m.session_counts().values()) == 4
    write_manifest(m, tmp_path / "m2.json")
    m2 = load_manifest(tmp_path / "m2.json")
    assert m2.schema == m.schema and m2.participants == m.participants and m2.frame_rate_hz == m.frame_rate_hz

    doc["participants"][0]["sessions"].append("nope.csv")
    (tmp_path / "m3.json").write_text(json.dumps(doc))
    with pytest.raises(MissingSession):
        load_manifest(tmp_path / "m3.json")
    doc["participants"][0]["sessions"].pop()
    doc["schema"].append({"name": "gaze_x", "modality": "visual", "kind": "continuous"})
    (tmp_path / "m4.json").write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        load_manifest(tmp_path / "m4.json")
    (tmp_path / "m5.json").write_text("{not json")
    with pytest.raises(ParseError):
        load_manifest(tmp_path / "m5.json")


def test_exclude_absent_frames():
    s, removed = exclude_absent_frames(session(10, excluded=(3, 7)))
    assert len(s) == 8 and removed == 2
    again, removed2 = exclude_absent_frames(s)
    assert removed2 == 0 and again.same_as(s)
    whole = session(10)
    same, zero = exclude_absent_frames(whole)
    assert zero == 0 and same.same_as(whole)
    empty, removed = exclude_absent_frames(session(4, excluded=range(4)))
    assert len(empty) == 0 and removed == 4
