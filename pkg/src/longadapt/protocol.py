"""Chronological, leave-one-participant-out evaluation harness.

Each participant takes a turn as the test participant (one *round*). With
``S`` sessions the round holds ``S - 1`` experiments: experiment ``j`` trains
on sessions ``1..j`` of that participant (and/or on every session of the other
participants, depending on the method) and tests on session ``j + 1``.

Cell randomness is derived from (global seed, participant, test session, model
kind, task) and deliberately not from the method, so the adaptive method at its
alpha endpoints reproduces the baselines exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .adaptation import AdaptationConfig, train_personalized, train_personalized_uda
from .analysis.metrics import auroc, f1, roc_points
from .classifiers import ModelSpec
from .dataset import TASKS
from .errors import ConfigError, EmptyResults, LongAdaptError
from .fitting import fit_scaled

METHODS = ("individualized", "generic", "personalized_sda", "personalized_uda")
METHOD_CODES = {"individualized": "IND", "generic": "GEN", "personalized_sda": "PER", "personalized_uda": "UDA"}
CODE_METHODS = {v: k for k, v in METHOD_CODES.items()}
RESULT_COLUMNS = ("round", "participant", "test_session", "method", "kind", "task",
                  "auroc", "f1_pos", "f1_neg", "n", "alpha")
THREADS_ENV = "LONGADAPT_THREADS"


class SingleSessionParticipant(UserWarning):
    """A participant with one session yields no chronological experiments."""


def resolve_method(name: str) -> str:
    if name in METHODS:
        return name
    if name.upper() in CODE_METHODS:
        return CODE_METHODS[name.upper()]
    raise ConfigError(f"unknown method {name!r}")


def thread_limit(default: int = 1) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from exc
    return max(1, n)


@dataclass(frozen=True)
class ExperimentPlan:
    test_participant: str
    train_sessions: tuple[int, ...]
    test_session: int
    source_participants: tuple[str, ...]
    method: str
    kind: str
    task: str
    round: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if not self.train_sessions or self.train_sessions != tuple(range(1, len(self.train_sessions) + 1)):
            raise ValueError("train sessions must run contiguously from 1")
        if self.test_session != self.train_sessions[-1] + 1:
            raise ValueError("the test session must directly follow the training sessions")
        if self.test_participant in self.source_participants:
            raise ValueError("the test participant cannot be a source participant")

    @property
    def code(self) -> str:
        return METHOD_CODES[self.method]

    @property
    def cell_key(self) -> str:
        return f"{self.test_participant}_S{self.test_session}_{self.code}_{self.kind}_{self.task}"

    @property
    def uses_target(self) -> bool:
        return self.method in ("individualized", "personalized_sda")

    @property
    def uses_source(self) -> bool:
        return self.method != "individualized"


def _participants_and_counts(study) -> tuple[list[str], dict[str, int]]:
    ids = study.participant_ids if hasattr(study, "participant_ids") else study.participants
    return list(ids), study.session_counts()


def plan_round(study, test_participant: str, method: str, kind: str, task: str) -> list[ExperimentPlan]:
    """The ``S - 1`` chronological plans of one round; a single-session participant yields none."""
    ids, counts = _participants_and_counts(study)
    if test_participant not in ids:
        raise KeyError(f"unknown participant {test_participant!r}")
    method = resolve_method(method)
    n_sessions = counts[test_participant]
    if n_sessions < 2:
        warnings.warn(f"{test_participant} has a single session; no experiments planned", SingleSessionParticipant)
        return []
    sources = tuple(p for p in ids if p != test_participant)
    rnd = ids.index(test_participant) + 1
    return [
        ExperimentPlan(test_participant, tuple(range(1, j + 1)), j + 1, sources, method, kind, task, rnd)
        for j in range(1, n_sessions)
    ]


@dataclass(frozen=True, eq=False)
class TrainingData:
    """Labelled windows a plan may train on, with (participant, session, start) keys per row."""

    target_sessions: tuple[tuple[np.ndarray, np.ndarray], ...]
    target_keys: tuple[tuple[str, int, float], ...]
    source_X: np.ndarray
    source_y: np.ndarray
    source_keys: tuple[tuple[str, int, float], ...]

    @property
    def target(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.target_sessions:
            return np.empty((0, self.source_X.shape[1])), np.empty(0, dtype=np.int64)
        return (np.vstack([X for X, _ in self.target_sessions]),
                np.concatenate([y for _, y in self.target_sessions]))


def _labelled(study, pid: str, k: int, task: str):
    X, y, starts = study.table(pid, k).labelled(task)
    return X, y, [(pid, k, float(s)) for s in starts]


def assemble_training(plan: ExperimentPlan, study) -> TrainingData:
    """Gather the labelled rows the plan's method trains on, in a fixed order."""
    width = len(study.feature_names)
    t_sessions, t_keys = [], []
    if plan.uses_target:
        for k in plan.train_sessions:
            X, y, keys = _labelled(study, plan.test_participant, k, plan.task)
            t_sessions.append((X, y))
            t_keys += keys
    xs, ys, s_keys = [], [], []
    if plan.uses_source:
        _, counts = _participants_and_counts(study)
        for pid in plan.source_participants:
            for k in range(1, counts[pid] + 1):
                X, y, keys = _labelled(study, pid, k, plan.task)
                xs.append(X)
                ys.append(y)
                s_keys += keys
    sx = np.vstack(xs) if xs else np.empty((0, width))
    sy = np.concatenate(ys) if ys else np.empty(0, dtype=np.int64)
    return TrainingData(tuple(t_sessions), tuple(t_keys), sx, sy, tuple(s_keys))


def audit_plan(plan: ExperimentPlan, study) -> list[tuple[str, int, float]]:
    """Training keys that break temporal soundness; an empty list means the plan is clean.

    A row of the test participant must come from a session strictly before the
    test session. The unlabeled test-session features that the CORAL method
    aligns to are not training instances and are not listed here.
    """
    data = assemble_training(plan, study)
    bad = []
    for pid, k, start in data.target_keys + data.source_keys:
        if pid == plan.test_participant and k >= plan.test_session:
            bad.append((pid, k, start))
    for pid, k, start in data.source_keys:
        if pid == plan.test_participant and (pid, k, start) not in bad:
            bad.append((pid, k, start))
    return bad


def audit_plans(plans: Sequence[ExperimentPlan], study) -> dict[str, list]:
    return {p.cell_key: v for p in plans if (v := audit_plan(p, study))}


def held_out_set(plan: ExperimentPlan, study) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return study.table(plan.test_participant, plan.test_session).labelled(plan.task)


def fingerprint(X: np.ndarray, y: np.ndarray, starts: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in (np.ascontiguousarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64),
              np.asarray(starts, dtype=np.float64)):
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def cell_seed(global_seed: int, participant: str, test_session: int, kind: str, task: str) -> int:
    tag = zlib.crc32(f"{participant}|{test_session}|{kind}|{task}".encode())
    return int(np.random.SeedSequence([int(global_seed), tag]).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentResult:
    plan: ExperimentPlan
    status: str  # ok | skipped | failed
    reason: str = ""
    auroc: float = float("nan")
    f1_positive: float = float("nan")
    f1_negative: float = float("nan")
    roc_points: tuple[tuple[float, float], ...] = ()
    n_test_instances: int = 0
    chosen_alpha: float | None = None
    test_fingerprint: str = ""
    alpha_curve: tuple[float, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _fit(plan: ExperimentPlan, data: TrainingData, X_test, spec: ModelSpec, cfg: AdaptationConfig, workers: int):
    if plan.method == "individualized":
        X, y = data.target
        return fit_scaled(spec, X, y), None, ()
    if plan.method == "generic":
        return fit_scaled(spec, data.source_X, data.source_y), None, ()
    if plan.method == "personalized_sda":
        model, search = train_personalized((data.source_X, data.source_y), data.target_sessions, spec, cfg, workers)
        return model, search.chosen_alpha, tuple(search.metric_mean)
    model = train_personalized_uda((data.source_X, data.source_y), X_test, spec, cfg.coral_ridge)
    return model, None, ()


def predict_cell(plan: ExperimentPlan, study, spec: ModelSpec, cfg: AdaptationConfig = AdaptationConfig(),
                 seed: int = 0, workers: int = 1) -> tuple[np.ndarray, float | None, tuple]:
    """Test-session scores of the plan's model, with the chosen alpha and its CV curve for s-DA."""
    X_test = held_out_set(plan, study)[0]
    s = cell_seed(seed, plan.test_participant, plan.test_session, plan.kind, plan.task)
    data = assemble_training(plan, study)
    model, alpha, curve = _fit(plan, data, X_test, spec.with_seed(s), replace(cfg, seed=s), workers)
    return model.scores(X_test), alpha, curve


def run_experiment(plan: ExperimentPlan, study, spec: ModelSpec, cfg: AdaptationConfig = AdaptationConfig(),
                   seed: int = 0, workers: int = 1) -> ExperimentResult:
    """Train by the plan's method and score its test session.

    The standardizer is fitted on the rows the model trains on only. A test
    session lacking a class is returned as ``skipped``; training errors
    propagate.
    """
    X_test, y_test, starts = held_out_set(plan, study)
    fp = fingerprint(X_test, y_test, starts)
    if y_test.size == 0:
        return ExperimentResult(plan, "skipped", "EmptyTestSession", test_fingerprint=fp)
    if np.unique(y_test).size < 2:
        return ExperimentResult(plan, "skipped", "SingleClassTestSession", n_test_instances=int(y_test.size),
                                test_fingerprint=fp)
    scores, alpha, curve = predict_cell(plan, study, spec, cfg, seed, workers)
    pred = (scores >= 0.5).astype(np.int64)
    return ExperimentResult(
        plan, "ok", "",
        auroc=auroc(scores, y_test),
        f1_positive=f1(pred, y_test, 1),
        f1_negative=f1(pred, y_test, 0),
        roc_points=tuple(roc_points(scores, y_test)),
        n_test_instances=int(y_test.size),
        chosen_alpha=alpha,
        test_fingerprint=fp,
        alpha_curve=curve,
    )


@dataclass(frozen=True)
class RoundSummary:
    results: tuple[ExperimentResult, ...]
    wave_auroc: float
    wave_f1_pos: float
    wave_f1_neg: float
    n_total: int

    def as_dict(self) -> dict:
        return {"auroc": self.wave_auroc, "f1_pos": self.wave_f1_pos, "f1_neg": self.wave_f1_neg,
                "n": self.n_total, "cells": len(self.results)}


def weighted_average(results: Sequence[ExperimentResult]) -> RoundSummary:
    """Average each metric over successful cells, weighted by test-instance count."""
    used = tuple(r for r in results if r.ok)
    if not used:
        raise EmptyResults("no successful results to average")
    w = np.array([r.n_test_instances for r in used], dtype=np.float64)

    def avg(values):
        return float(np.dot(w, np.asarray(values, dtype=np.float64)) / w.sum())

    return RoundSummary(used, avg([r.auroc for r in used]), avg([r.f1_positive for r in used]),
                        avg([r.f1_negative for r in used]), int(w.sum()))


@dataclass
class StudyResult:
    results: dict  # (participant, test_session, method, kind, task) -> ExperimentResult
    participants: list[str]
    methods: list[str]
    kinds: list[str]
    tasks: list[str]
    seed: int = 0
    summaries: dict = field(default_factory=dict)  # (participant, method, kind, task) -> RoundSummary
    wave: dict = field(default_factory=dict)  # (method, kind, task) -> RoundSummary

    def ordered(self) -> list[ExperimentResult]:
        def rank(key):
            pid, k, m, kind, task = key
            return (self.participants.index(pid), k, self.methods.index(m), self.kinds.index(kind),
                    self.tasks.index(task))

        return [self.results[k] for k in sorted(self.results, key=rank)]

    def fingerprint_mismatches(self) -> list[tuple[str, int, str, str]]:
        """(participant, session, kind, task) cells where methods saw different test sets."""
        seen: dict = {}
        for (pid, k, _, kind, task), r in self.results.items():
            seen.setdefault((pid, k, kind, task), set()).add(r.test_fingerprint)
        return sorted(key for key, fps in seen.items() if len(fps) > 1)


def _summarize(out: StudyResult) -> None:
    groups: dict = {}
    overall: dict = {}
    for r in out.ordered():
        p = r.plan
        groups.setdefault((p.test_participant, p.method, p.kind, p.task), []).append(r)
        overall.setdefault((p.method, p.kind, p.task), []).append(r)
    for key, rs in groups.items():
        if any(r.ok for r in rs):
            out.summaries[key] = weighted_average(rs)
    for key, rs in overall.items():
        if any(r.ok for r in rs):
            out.wave[key] = weighted_average(rs)


def run_study(study, methods: Sequence[str], kinds: Sequence, tasks: Sequence[str] = TASKS,
              cfg: AdaptationConfig = AdaptationConfig(), seed: int = 0, workers: int | None = None) -> StudyResult:
    """Run every (round, session, method, kind, task) cell of a prepared study.

    ``kinds`` holds model kind names or :class:`ModelSpec` objects. Cells run
    on a bounded thread pool (``workers``, defaulting to ``LONGADAPT_THREADS``
    or 1); results are keyed, so the outcome does not depend on completion
    order. A cell that raises is recorded as ``failed`` with the reason.
    """
    if not methods or not kinds or not tasks:
        raise ConfigError("need at least one method, model kind and task")
    methods = [resolve_method(m) for m in methods]
    specs = [k if isinstance(k, ModelSpec) else ModelSpec(kind=k) for k in kinds]
    kind_names = [s.kind for s in specs]
    if len(set(kind_names)) != len(kind_names) or len(set(methods)) != len(methods):
        raise ConfigError("methods and model kinds must be distinct")
    for t in tasks:
        if t not in TASKS:
            raise ConfigError(f"unknown task {t!r}")
    workers = thread_limit() if workers is None else max(1, int(workers))
    ids, _ = _participants_and_counts(study)
    cells = []
    for pid in ids:
        for m in methods:
            for spec in specs:
                for t in tasks:
                    cells += [(p, spec) for p in plan_round(study, pid, m, spec.kind, t)]

    def run(cell):
        plan, spec = cell
        try:
            return run_experiment(plan, study, spec, cfg, seed)
        except (LongAdaptError, ValueError, np.linalg.LinAlgError) as exc:
            X, y, st = held_out_set(plan, study)
            return ExperimentResult(plan, "failed", f"{type(exc).__name__}: {exc}", n_test_instances=int(y.size),
                                    test_fingerprint=fingerprint(X, y, st))

    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, cells))
    else:
        outcomes = [run(c) for c in cells]
    results = {}
    for (plan, _), r in zip(cells, outcomes):
        results[(plan.test_participant, plan.test_session, plan.method, plan.kind, plan.task)] = r
    out = StudyResult(results, ids, methods, kind_names, list(tasks), seed)
    _summarize(out)
    return out


def _num(x) -> str:
    if x is None or (isinstance(x, float) and x != x):
        return ""
    return repr(float(x))


def _nan_free(x):
    return None if x is None or x != x else float(x)


def write_results(out: StudyResult, out_dir) -> dict[str, Path]:
    """Write ``results.csv``, ``results.json`` and ``roc/<cell-key>.roc.csv`` files."""
    out_dir = Path(out_dir)
    roc_dir = out_dir / "roc"
    roc_dir.mkdir(parents=True, exist_ok=True)
    rows = out.ordered()
    csv_path = out_dir / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            p = r.plan
            w.writerow([p.round, p.test_participant, p.test_session, p.code, p.kind, p.task,
                        _num(r.auroc), _num(r.f1_positive), _num(r.f1_negative), r.n_test_instances,
                        _num(r.chosen_alpha)])
    for r in rows:
        if r.roc_points:
            with open(roc_dir / f"{r.plan.cell_key}.roc.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("fpr", "tpr"))
                w.writerows((repr(a), repr(b)) for a, b in r.roc_points)
    doc = {
        "seed": out.seed,
        "participants": out.participants,
        "methods": [METHOD_CODES[m] for m in out.methods],
        "kinds": out.kinds,
        "tasks": out.tasks,
        "cells": [
            {
                "key": r.plan.cell_key, "round": r.plan.round, "participant": r.plan.test_participant,
                "train_sessions": list(r.plan.train_sessions), "test_session": r.plan.test_session,
                "method": r.plan.code, "kind": r.plan.kind, "task": r.plan.task, "status": r.status,
                "reason": r.reason, "auroc": _nan_free(r.auroc), "f1_pos": _nan_free(r.f1_positive),
                "f1_neg": _nan_free(r.f1_negative), "n": r.n_test_instances, "alpha": _nan_free(r.chosen_alpha),
                "alpha_curve": [_nan_free(v) for v in r.alpha_curve], "test_fingerprint": r.test_fingerprint,
            }
            for r in rows
        ],
        "rounds": [
            {"participant": pid, "method": METHOD_CODES[m], "kind": kind, "task": task, **s.as_dict()}
            for (pid, m, kind, task), s in out.summaries.items()
        ],
        "wave": [
            {"method": METHOD_CODES[m], "kind": kind, "task": task, **s.as_dict()}
            for (m, kind, task), s in out.wave.items()
        ],
    }
    json_path = out_dir / "results.json"
    json_path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return {"csv": csv_path, "json": json_path, "roc": roc_dir}


def read_results_csv(path) -> list[dict]:
    """Rows of a results CSV with numeric fields parsed; empty metric cells become NaN."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"results file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ConfigError(f"{path} is not a results matrix")
        rows = []
        for row in reader:
            for k in ("auroc", "f1_pos", "f1_neg", "alpha"):
                row[k] = float(row[k]) if row[k] != "" else float("nan")
            for k in ("round", "test_session", "n"):
                row[k] = int(row[k])
            rows.append(row)
    return rows
