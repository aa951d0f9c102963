"""``longadapt`` command line: synth, preprocess, evaluate, stats, report.

Exit codes: 0 success, 2 input error, 3 refusing to overwrite.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .adaptation import AdaptationConfig
from .analysis.stats import PairedSample, wilcoxon_one_sided
from .classifiers import ModelSpec
from .dataset import TASKS, load_manifest
from .errors import AllZeroDifferences, ConfigError, InputError, LongAdaptError
from .preprocess import WindowConfig, preprocess_study, write_windows_csv
from .protocol import CODE_METHODS, METHOD_CODES, read_results_csv, resolve_method, run_study, thread_limit, write_results
from .report import build_report
from .synthgen import generate_study, load_config

EXIT_OK, EXIT_INPUT, EXIT_OVERWRITE = 0, 2, 3
STAT_METRICS = ("auroc", "f1_pos", "f1_neg")


@dataclass
class RunConfig:
    manifest: Path
    out_dir: Path
    tasks: list[str] = field(default_factory=lambda: list(TASKS))
    methods: list[str] = field(default_factory=lambda: list(METHOD_CODES))
    kinds: list[ModelSpec] = field(default_factory=lambda: [ModelSpec("gbdt")])
    window: WindowConfig = field(default_factory=WindowConfig)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    seed: int = 0
    workers: int | None = None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {"manifest", "out_dir", "tasks", "methods", "kinds", "window", "adaptation", "seed", "workers"}
        if set(doc) - known:
            raise ConfigError(f"unknown run config keys: {sorted(set(doc) - known)}")
        if "manifest" not in doc or "out_dir" not in doc:
            raise ConfigError("run config needs manifest and out_dir")
        base = path.parent
        kinds = []
        for k in doc.get("kinds", ["gbdt"]):
            if isinstance(k, str):
                kinds.append(ModelSpec(k))
            else:
                kinds.append(ModelSpec(k.get("kind", "gbdt"), k.get("hyperparameters", {})))
        try:
            window = WindowConfig(**doc.get("window", {}))
            adapt = doc.get("adaptation", {})
            if "alpha_grid" in adapt:
                adapt = {**adapt, "alpha_grid": tuple(adapt["alpha_grid"])}
            adaptation = AdaptationConfig(**adapt)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg = cls(base / doc["manifest"], base / doc["out_dir"], list(doc.get("tasks", TASKS)),
                  [resolve_method(m) for m in doc.get("methods", list(METHOD_CODES))], kinds, window, adaptation,
                  int(doc.get("seed", 0)), doc.get("workers"))
        if not cfg.tasks or not cfg.methods or not cfg.kinds:
            raise ConfigError("need at least one task, method and model kind")
        return cfg


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_synth(args) -> int:
    cfg, doc = load_config(args.config, args.seed)
    out = Path(args.out) if args.out else Path(args.config).parent / doc.get("out_dir", "study")
    manifest_path = out / "manifest.json"
    if manifest_path.exists() and not args.force:
        _err(f"{manifest_path} exists; pass --force to overwrite")
        return EXIT_OVERWRITE
    generate_study(cfg, out)
    print(manifest_path)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    manifest = load_manifest(args.manifest)
    study = preprocess_study(manifest, WindowConfig(args.window, args.shift, args.min_label_fraction))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = write_windows_csv(study, out / "windows.csv")
    print(path)
    return EXIT_OK


def format_wave_table(result, kind: str, task: str) -> str:
    codes = [METHOD_CODES[m] for m in result.methods]
    lines = [f"AUROC wAVE ({kind}, {task})", "participant " + " ".join(f"{c:>6}" for c in codes)]
    for pid in result.participants:
        vals = []
        for m in result.methods:
            s = result.summaries.get((pid, m, kind, task))
            vals.append(f"{s.wave_auroc:6.3f}" if s else f"{'n/a':>6}")
        lines.append(f"{pid:<11} " + " ".join(vals))
    vals = []
    for m in result.methods:
        s = result.wave.get((m, kind, task))
        vals.append(f"{s.wave_auroc:6.3f}" if s else f"{'n/a':>6}")
    lines.append(f"{'wAVE':<11} " + " ".join(vals))
    return "\n".join(lines)


def cmd_evaluate(args) -> int:
    cfg = RunConfig.from_file(args.config)
    manifest = load_manifest(cfg.manifest)
    study = preprocess_study(manifest, cfg.window)
    workers = cfg.workers if cfg.workers is not None else thread_limit()
    result = run_study(study, cfg.methods, cfg.kinds, cfg.tasks, cfg.adaptation, cfg.seed, workers)
    write_results(result, cfg.out_dir)
    for kind in result.kinds:
        for task in result.tasks:
            print(format_wave_table(result, kind, task))
            print()
    bad = [r for r in result.ordered() if not r.ok]
    for r in bad:
        print(f"{r.plan.cell_key}: {r.status} ({r.reason})", file=sys.stderr)
    if len(bad) == len(result.results):
        _err("no cell produced a score")
        return EXIT_INPUT
    return EXIT_OK


def compare(rows: list[dict], a: str, b: str) -> list[dict]:
    """Wilcoxon records for ``a > b`` per kind, task and metric.

    A cell present for one method only raises KeyError. Cells present for both
    but unscored (NaN) on either side are left out and counted in ``n_unscored``.
    """
    out = []
    kinds = list(dict.fromkeys(r["kind"] for r in rows))
    tasks = list(dict.fromkeys(r["task"] for r in rows))
    for kind in kinds:
        for task in tasks:
            for metric in STAT_METRICS:
                side = {}
                for code in (a, b):
                    side[code] = {(r["participant"], r["test_session"]): r[metric] for r in rows
                                  if r["method"] == code and r["kind"] == kind and r["task"] == task}
                if not side[a] and not side[b]:
                    continue
                if set(side[a]) != set(side[b]):
                    raise KeyError(f"unpaired cells: {sorted(set(side[a]) ^ set(side[b]))}")
                # a cell without a score on either side drops the pair
                keep = [k for k in side[a] if not (math.isnan(side[a][k]) or math.isnan(side[b][k]))]
                rec = {"comparison": f"{a}>{b}", "kind": kind, "task": task, "metric": metric,
                       "n_pairs": len(keep), "n_unscored": len(side[a]) - len(keep)}
                if not keep:
                    rec.update(n_effective=0, error="NoScoredPairs")
                    out.append(rec)
                    continue
                sample = PairedSample.from_mappings(a, {k: side[a][k] for k in keep}, b, {k: side[b][k] for k in keep})
                try:
                    res = wilcoxon_one_sided(sample)
                    rec.update(n_effective=res.n_effective, W_plus=res.W_plus, Z=res.Z, p=res.p_one_sided,
                               r=res.effect_size_r, mode=res.mode)
                except AllZeroDifferences as exc:
                    rec.update(n_effective=0, error="AllZeroDifferences", message=str(exc))
                out.append(rec)
    return out


def cmd_stats(args) -> int:
    rows = read_results_csv(args.results)
    records = []
    for pair in args.compare:
        parts = pair.split(":")
        if len(parts) != 2 or any(p.upper() not in CODE_METHODS for p in parts):
            _err(f"bad comparison {pair!r}; expected e.g. PER:GEN")
            return EXIT_INPUT
        a, b = (p.upper() for p in parts)
        try:
            recs = compare(rows, a, b)
        except KeyError as exc:
            _err(f"{a}:{b}: {exc.args[0]}")
            return EXIT_INPUT
        if not recs:
            _err(f"no cells for {a}:{b}")
            return EXIT_INPUT
        records += recs
    text = json.dumps(records, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_report(args) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        path = build_report(args.results, figures=not args.no_figures)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="longadapt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic study")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output directory (default: out_dir from the config)")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="window a study into a feature table")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--window", type=float, default=3.0)
    s.add_argument("--shift", type=float, default=1.0)
    s.add_argument("--min-label-fraction", type=float, default=0.5)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("evaluate", help="run the chronological protocol")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("stats", help="one-sided Wilcoxon tests between methods")
    s.add_argument("--results", required=True)
    s.add_argument("--compare", nargs="+", default=["PER:GEN", "PER:IND", "IND:GEN"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("report", help="Markdown summary, merged ROC data and figures")
    s.add_argument("--results", required=True)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except LongAdaptError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT
    except (FileNotFoundError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
