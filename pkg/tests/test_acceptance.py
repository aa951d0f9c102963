"""Acceptance checks, one test per criterion.

Each check returns ``(passed, detail)``; the test records a PASS/FAIL line
(printed in the pytest terminal summary) and then asserts. Run this file
directly to print the lines without pytest.
"""

import itertools
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm

from longadapt.adaptation import AdaptationConfig, coral_align, coral_matrix, reweight
from longadapt.analysis import PairedSample, auroc, fleiss_kappa, roc_points, trapezoid_area, wilcoxon_one_sided
from longadapt.classifiers import ModelSpec, train_classifier
from longadapt.cli import main
from longadapt.dataset import load_manifest
from longadapt.preprocess import preprocess_study
from longadapt.protocol import audit_plan, fingerprint, held_out_set, plan_round, predict_cell, run_study
from longadapt.synthgen import SynthConfig, bayes_auroc, generate_study

LINES: dict[int, str] = {}

NAMES = {
    1: "metric oracle equivalence",
    2: "Wilcoxon correctness",
    3: "reweighting algebra",
    4: "endpoint equivalence",
    5: "weight-duplication equivalence",
    6: "CORAL covariance matching",
    7: "direction-matching personalization",
    8: "u-DA vs s-DA direction",
    9: "protocol temporal audit",
    10: "Bayes-bound sanity",
    11: "Fleiss kappa",
    12: "end-to-end determinism",
}


def record(n: int, check, *args, limit: float | None = None):
    t0 = time.perf_counter()
    ok, detail = check(*args)
    dt = time.perf_counter() - t0
    if limit is not None and dt >= limit:
        ok, detail = False, f"{detail}; over the {limit:.0f} s budget"
    LINES[n] = f"{'PASS' if ok else 'FAIL'} criterion {n:>2} ({NAMES[n]}): {detail} [{dt:.1f} s]"
    print(LINES[n])
    assert ok, LINES[n]


def pair_count(scores, labels):
    pos, neg = scores[labels == 1], scores[labels == 0]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (pos.size * neg.size)


def study(root: Path, **kw):
    cfg = SynthConfig(**kw)
    generate_study(cfg, root)
    return cfg, preprocess_study(load_manifest(root / "manifest.json"))


# 1

def check_metrics():
    rng = np.random.default_rng(2024)
    worst_pair = worst_area = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 51))
        y = rng.integers(0, 2, n)
        y[rng.choice(n, 2, replace=False)] = (0, 1)
        # coarse scores force ties
        s = np.round(rng.normal(size=n), int(rng.integers(0, 3)))
        a = auroc(s, y)
        worst_pair = max(worst_pair, abs(a - pair_count(s, y)))
        worst_area = max(worst_area, abs(trapezoid_area(roc_points(s, y)) - a))
    ok = worst_pair <= 1e-12 and worst_area <= 1e-12
    return ok, f"500 sets, max |auroc - pairs| {worst_pair:.1e}, max |area - auroc| {worst_area:.1e}"


# 2

def enumerate_tail(abs_d, w_plus):
    ranks = np.argsort(np.argsort(abs_d)) + 1
    hits = sum(1 for signs in itertools.product((0, 1), repeat=ranks.size)
               if sum(int(r) for r, s in zip(ranks, signs) if s) >= w_plus - 1e-9)
    return hits / 2 ** ranks.size


def diffs(d):
    d = np.asarray(d, dtype=float)
    return PairedSample("a", "b", tuple(d), tuple(np.zeros_like(d)))


def check_wilcoxon():
    rng = np.random.default_rng(7)
    worst, modes = 0.0, set()
    for i in range(60):
        n = 1 + i % 10
        d = rng.permutation(np.arange(1, n + 1)) * rng.choice((-1.0, 1.0), n) + rng.normal(0, 0.01, n)
        res = wilcoxon_one_sided(diffs(d))
        modes.add(res.mode)
        worst = max(worst, abs(res.p_one_sided - enumerate_tail(np.abs(d), res.W_plus)))
    worked = wilcoxon_one_sided(diffs([1, 2, 3, -1, 4, 5]))
    # ranks 1.5, 3, 4, 1.5, 5, 6; tie correction (2^3 - 2) / 48
    z = (19.5 - 10.5) / math.sqrt(6 * 7 * 13 / 24 - 6 / 48)
    ok = (worst <= 1e-12 and modes == {"exact"} and worked.W_plus == 19.5
          and abs(worked.Z - z) <= 1e-12 and abs(worked.p_one_sided - norm.sf(z)) <= 1e-12)
    return ok, f"60 tie-free fixtures n<=10, max |p - enumeration| {worst:.1e}; worked W+ {worked.W_plus}"


# 3

def check_reweight():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        n_t, n_s = (int(v) for v in rng.integers(1, 300, 2))
        alpha = float(rng.uniform())
        lt, ls = rng.exponential(size=n_t), rng.exponential(size=n_s)
        wt, ws = reweight(n_t, n_s, alpha)
        weighted_mean = (wt * lt.sum() + ws * ls.sum()) / (n_t + n_s)
        target = alpha * lt.mean() + (1 - alpha) * ls.mean()
        mass = (wt * n_t + ws * n_s) / (n_t + n_s)
        worst = max(worst, abs(weighted_mean - target) / max(1.0, target), abs(mass - 1.0))
    return worst <= 1e-12, f"1000 cases, max relative error {worst:.1e}"


# 4

def check_endpoints(root):
    _, st = study(root, n_participants=4, sessions_per_participant=(5, 6, 4, 4), session_seconds=60.0,
                  n_visual=3, n_audio=1, n_game=1, seed=11)
    cells = mismatches = 0
    for kind in ("gbdt", "logreg"):
        spec = ModelSpec(kind)
        for task in ("arousal", "valence"):
            for pid in ("P1", "P2", "P3", "P4"):
                for alpha, base in ((1.0, "individualized"), (0.0, "generic")):
                    cfg = AdaptationConfig(alpha_grid=(alpha,))
                    for p_plan, b_plan in zip(plan_round(st, pid, "personalized_sda", kind, task),
                                              plan_round(st, pid, base, kind, task)):
                        try:
                            a = predict_cell(p_plan, st, spec, cfg, seed=5)[0]
                        except Exception as exc:
                            a = type(exc).__name__
                        try:
                            b = predict_cell(b_plan, st, spec, cfg, seed=5)[0]
                        except Exception as exc:
                            b = type(exc).__name__
                        cells += 1
                        same = a == b if isinstance(a, str) or isinstance(b, str) else np.array_equal(a, b)
                        mismatches += not same
    return mismatches == 0 and cells > 0, f"{cells} cell pairs, {mismatches} not bit-identical"


# 5

def check_duplication():
    worst = 0.0
    for i in range(20):
        rng = np.random.default_rng(500 + i)
        n, d = int(rng.integers(20, 60)), int(rng.integers(2, 6))
        X = rng.normal(size=(n, d))
        y = (X @ rng.normal(size=d) + rng.normal(size=n) > 0).astype(int)
        y[:2] = (0, 1)
        w = rng.integers(1, 5, n)
        Xd, yd = np.repeat(X, w, axis=0), np.repeat(y, w)
        for kind in ("gbdt", "logreg"):
            spec = ModelSpec(kind, seed=i)
            a = train_classifier(spec, X, y, w.astype(float)).scores(X)
            b = train_classifier(spec, Xd, yd).scores(X)
            worst = max(worst, float(np.max(np.abs(a - b))))
    return worst <= 1e-9, f"20 fixtures x gbdt/logreg, max |score diff| {worst:.1e}"


# 6

def check_coral():
    rng = np.random.default_rng(6)
    Xs = rng.normal(size=(500, 5)) @ rng.normal(size=(5, 5))
    Xt = rng.normal(size=(500, 5)) @ rng.normal(size=(5, 5)) + 2.0
    eye = np.eye(5)
    ridge = 1.0
    A = coral_matrix(Xs, Xt, ridge)
    reg_s = np.cov(Xs, rowvar=False) + ridge * eye
    reg_t = np.cov(Xt, rowvar=False) + ridge * eye
    # the aligned source's regularized covariance is A^T (Cs + I) A
    gap = np.linalg.norm(A.T @ reg_s @ A - reg_t)
    aligned = coral_align(Xs, Xt, ridge)
    gap_lin = np.linalg.norm(np.cov(aligned, rowvar=False) - A.T @ np.cov(Xs, rowvar=False) @ A)
    tiny = 1e-9
    gap_small = np.linalg.norm(np.cov(coral_align(Xs, Xt, tiny), rowvar=False) - np.cov(Xt, rowvar=False))
    ident = float(np.max(np.abs(coral_align(Xs, Xs, ridge) - Xs)))
    ok = gap <= 1e-6 and gap_lin <= 1e-6 and gap_small <= 1e-6 and ident <= 1e-8
    return ok, (f"ridge 1 Frobenius gap {gap:.1e}, ridge 1e-9 raw-covariance gap {gap_small:.1e}, "
                f"identity max diff {ident:.1e}")


# 7

C7 = dict(session_seconds=200.0, n_visual=8, n_audio=4, n_game=1)
C7_METHODS = ("individualized", "generic", "personalized_sda")


def check_personalization(root):
    spec = ModelSpec("logreg")
    per_p = {m: {} for m in C7_METHODS}
    overall = {m: [] for m in C7_METHODS}
    wins, best = 0, {"individualized": 0, "generic": 0}
    for seed in range(10):
        _, st = study(root / str(seed), concept_shift=1.0, seed=seed, **C7)
        res = run_study(st, list(C7_METHODS), [spec], ["arousal"], seed=seed)
        for m in C7_METHODS:
            overall[m].append(res.wave[(m, "logreg", "arousal")].wave_auroc)
            for pid in res.participants:
                per_p[m].setdefault(pid, []).append(res.summaries[(pid, m, "logreg", "arousal")].wave_auroc)
        cells = {m: {k[:2]: r.auroc for k, r in res.results.items() if k[2] == m and r.ok} for m in C7_METHODS}
        for key in cells["individualized"].keys() & cells["generic"].keys():
            ind, gen = cells["individualized"][key], cells["generic"][key]
            if ind != gen:
                best["individualized" if ind > gen else "generic"] += 1
        ps = []
        for base in ("generic", "individualized"):
            keys = cells["personalized_sda"].keys() & cells[base].keys()
            sample = PairedSample.from_mappings("PER", {k: cells["personalized_sda"][k] for k in keys},
                                                base, {k: cells[base][k] for k in keys})
            ps.append(wilcoxon_one_sided(sample).p_one_sided)
        wins += min(ps) < 0.05
    margins = {pid: np.mean(per_p["personalized_sda"][pid])
               - max(np.mean(per_p["individualized"][pid]), np.mean(per_p["generic"][pid]))
               for pid in per_p["personalized_sda"]}
    mean = {m: float(np.mean(v)) for m, v in overall.items()}
    lead = mean["personalized_sda"] - min(mean["individualized"], mean["generic"])
    ok = (min(margins.values()) >= -0.01 and lead >= 0.02 and wins >= 8
          and best["individualized"] > 0 and best["generic"] > 0)
    return ok, (f"PER {mean['personalized_sda']:.3f} IND {mean['individualized']:.3f} GEN {mean['generic']:.3f}; "
                f"min per-participant margin {min(margins.values()):+.3f}; significant seeds {wins}/10; "
                f"best-baseline sessions IND {best['individualized']} GEN {best['generic']}")


# 8

def check_uda(root):
    spec = ModelSpec("logreg")
    gaps = []
    for seed in range(3):
        _, st = study(root / str(seed), concept_shift=1.5, seed=seed, **C7)
        res = run_study(st, ["personalized_sda", "personalized_uda"], [spec], ["arousal"], seed=seed)
        gaps.append(res.wave[("personalized_sda", "logreg", "arousal")].wave_auroc
                    - res.wave[("personalized_uda", "logreg", "arousal")].wave_auroc)
    return min(gaps) >= 0.05, "PER - UDA wAVE per seed " + ", ".join(f"{g:+.3f}" for g in gaps)


# 9

def check_audit(root):
    _, st = study(root, n_participants=4, sessions_per_participant=(5, 6, 4, 4), session_seconds=60.0,
                  n_visual=2, n_audio=1, n_game=1, seed=9)
    leaks, plans, counts_ok = 0, 0, True
    prints: dict[tuple, set] = {}
    for method in ("individualized", "generic", "personalized_sda", "personalized_uda"):
        for kind in ("gbdt", "logreg", "linear_svm", "knn", "mlp"):
            for task in ("arousal", "valence"):
                combo = [p for pid in ("P1", "P2", "P3", "P4") for p in plan_round(st, pid, method, kind, task)]
                counts_ok &= len(combo) == 15
                for p in combo:
                    plans += 1
                    leaks += len(audit_plan(p, st))
                    X, y, s = held_out_set(p, st)
                    prints.setdefault((p.test_participant, p.test_session, p.task), set()).add(fingerprint(X, y, s))
    shared = all(len(v) == 1 for v in prints.values())
    ok = counts_ok and leaks == 0 and shared
    return ok, f"{plans} plans, 15 cells per combination: {counts_ok}, leaked rows {leaks}, shared fingerprints {shared}"


# 10

def check_bayes(root):
    worst, n_test, n_cells = -1.0, [], 0
    for seed in range(20):
        cfg, st = study(root / str(seed), n_participants=3, sessions_per_participant=(2,), session_seconds=1800.0,
                        participant_shift=0.0, concept_shift=0.0, session_drift=0.0,
                        n_visual=3, n_audio=1, n_game=1, seed=seed)
        res = run_study(st, ["individualized", "generic"], [ModelSpec("gbdt")], ["arousal"], seed=seed)
        bound = max(bayes_auroc(cfg, participant=p) for p in range(cfg.n_participants))
        for r in res.ordered():
            if r.ok:
                n_cells += 1
                worst = max(worst, r.auroc - bound)
        n_test.append(sum(r.n_test_instances for r in res.ordered() if r.plan.method == "generic"))
    ok = worst <= 0.02 and min(n_test) >= 5000 and n_cells > 0
    return ok, f"20 seeds, >= {min(n_test)} test windows each, {n_cells} cells, max (AUROC - bound) {worst:+.3f}"


# 11

def check_fleiss():
    zero = fleiss_kappa([[3, 0], [2, 1], [1, 2]])
    perfect = [fleiss_kappa([[2, 0], [0, 2]]), fleiss_kappa([[0, 4, 0], [4, 0, 0], [0, 0, 4]]),
               fleiss_kappa([[5, 0], [0, 5], [5, 0]])]
    return zero == 0.0 and all(k == 1.0 for k in perfect), f"worked example {zero}, perfect fixtures {perfect}"


# 12

SYNTH = {"n_participants": 4, "sessions_per_participant": [5, 6, 4, 4], "session_seconds": 60.0, "n_visual": 3,
         "n_audio": 1, "n_game": 1, "concept_shift": 1.0, "out_dir": "study"}
RUN = {"manifest": "study/manifest.json", "out_dir": "results", "tasks": ["arousal", "valence"],
       "methods": ["IND", "GEN", "PER", "UDA"],
       "kinds": [{"kind": "gbdt", "hyperparameters": {"n_rounds": 20, "max_depth": 3}}, "logreg"],
       "seed": 4}


def pipeline(root: Path, threads: str) -> dict[str, bytes]:
    root.mkdir(parents=True)
    (root / "synth.json").write_text(json.dumps(SYNTH))
    (root / "run.json").write_text(json.dumps(RUN))
    old = os.environ.get("LONGADAPT_THREADS")
    os.environ["LONGADAPT_THREADS"] = threads
    try:
        codes = [main(["synth", "--config", str(root / "synth.json")]),
                 main(["preprocess", "--manifest", str(root / "study/manifest.json"), "--out", str(root / "windows")]),
                 main(["evaluate", "--config", str(root / "run.json")]),
                 main(["stats", "--results", str(root / "results/results.csv"), "--compare", "PER:GEN",
                       "--out", str(root / "results/stats.json")]),
                 main(["report", "--results", str(root / "results")])]
    finally:
        if old is None:
            del os.environ["LONGADAPT_THREADS"]
        else:
            os.environ["LONGADAPT_THREADS"] = old
    assert codes == [0, 0, 0, 0, 0], codes
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def check_determinism(root):
    a = pipeline(root / "one", "1")
    b = pipeline(root / "three", "3")
    differ = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    pngs = sum(k.endswith(".png") for k in a)
    return not differ and pngs > 0, f"{len(a)} files ({pngs} PNG) compared, {len(differ)} differ {differ[:3]}"


def test_criterion_01():
    record(1, check_metrics, limit=10)


def test_criterion_02():
    record(2, check_wilcoxon, limit=10)


def test_criterion_03():
    record(3, check_reweight)


def test_criterion_04(tmp_path):
    record(4, check_endpoints, tmp_path)


def test_criterion_05():
    record(5, check_duplication)


def test_criterion_06():
    record(6, check_coral)


def test_criterion_07(tmp_path):
    record(7, check_personalization, tmp_path, limit=600)


def test_criterion_08(tmp_path):
    record(8, check_uda, tmp_path)


def test_criterion_09(tmp_path):
    record(9, check_audit, tmp_path)


def test_criterion_10(tmp_path):
    record(10, check_bayes, tmp_path)


def test_criterion_11():
    record(11, check_fleiss)


def test_criterion_12(tmp_path):
    record(12, check_determinism, tmp_path)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
