"""Markdown summary, merged ROC curve data and PNG figures built from a results directory.

Every number in the Markdown tables is copied from ``results.csv`` or
``results.json``; only the merged ROC curves (vertical averages of the per-cell
curves) are computed here.
"""

from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .protocol import read_results_csv

FPR_GRID = np.linspace(0.0, 1.0, 101)


class MissingRocFiles(UserWarning):
    """The results directory holds no per-cell ROC files."""


def read_roc(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["fpr", "tpr"]:
            raise ConfigError(f"{path} is not an ROC file")
        return np.array([[float(a), float(b)] for a, b in reader], dtype=np.float64).reshape(-1, 2)


def tpr_at(points: np.ndarray, grid: np.ndarray = FPR_GRID) -> np.ndarray:
    """Linear interpolation along a tie-aware ROC curve; on a vertical step the top value is used."""
    fpr, tpr = points[:, 0], points[:, 1]
    xs = np.unique(fpr)
    top = np.array([tpr[fpr == x].max() for x in xs])
    bottom = np.array([tpr[fpr == x].min() for x in xs])
    out = np.empty(grid.shape)
    for i, x in enumerate(grid):
        j = int(np.searchsorted(xs, x, side="left"))
        if j < xs.size and xs[j] == x:
            out[i] = top[j]
        elif j == 0:
            out[i] = bottom[0]
        elif j == xs.size:
            out[i] = top[-1]
        else:
            t = (x - xs[j - 1]) / (xs[j] - xs[j - 1])
            out[i] = top[j - 1] + t * (bottom[j] - top[j - 1])
    return out


def merge_curves(curves) -> np.ndarray:
    """Vertical average on the fixed FPR grid; returns an (n_grid, 2) array."""
    stacked = np.vstack([tpr_at(c) for c in curves])
    return np.column_stack([FPR_GRID, stacked.mean(axis=0)])


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and x != x):
        return "n/a"
    return f"{x:.3f}"


def _md_table(header, rows) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return lines


def _plot_roc(merged: dict, title: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for code, curve in merged.items():
        ax.plot(curve[:, 0], curve[:, 1], label=code)
    ax.plot([0, 1], [0, 1], color="grey", linestyle=":", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def _plot_sessions(rows: list[dict], methods: list[str], title: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cells = sorted({(r["round"], r["participant"], r["test_session"]) for r in rows})
    index = {c: i for i, c in enumerate(cells)}
    fig, ax = plt.subplots(figsize=(max(4.5, 0.35 * len(cells)), 3.5))
    for code in methods:
        pts = sorted((index[(r["round"], r["participant"], r["test_session"])], r["auroc"])
                     for r in rows if r["method"] == code and r["auroc"] == r["auroc"])
        if pts:
            ax.plot([p for p, _ in pts], [a for _, a in pts], marker="o", markersize=3, label=code)
    ax.set_xticks(range(len(cells)))
    ax.set_xticklabels([f"{p}-S{k}" for _, p, k in cells], rotation=90, fontsize=7)
    ax.set_ylabel("AUROC")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def build_report(results_dir, figures: bool = True) -> Path:
    """Write ``report/summary.md`` plus merged ROC CSVs and figures; returns the summary path."""
    results_dir = Path(results_dir)
    csv_path = results_dir / "results.csv"
    json_path = results_dir / "results.json"
    if not csv_path.is_file() or not json_path.is_file():
        raise ConfigError(f"{results_dir} lacks results.csv or results.json")
    rows = read_results_csv(csv_path)
    try:
        doc = json.loads(json_path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed {json_path}: {exc}") from exc
    out = results_dir / "report"
    out.mkdir(exist_ok=True)
    methods = doc["methods"]
    roc_dir = results_dir / "roc"
    roc_files = sorted(roc_dir.glob("*.roc.csv")) if roc_dir.is_dir() else []
    if not roc_files:
        warnings.warn("no ROC files found; the summary omits merged curves", MissingRocFiles)
    lines = ["# Evaluation summary", "",
             f"Seed {doc['seed']}; participants {', '.join(doc['participants'])}; "
             f"methods {', '.join(methods)}.", ""]
    for kind in doc["kinds"]:
        for task in doc["tasks"]:
            sel = [r for r in rows if r["kind"] == kind and r["task"] == task]
            codes = [m for m in methods if any(r["method"] == m for r in sel)]
            lines += [f"## {kind} / {task}", "", "### AUROC wAVE by participant", ""]
            rounds = {(d["participant"], d["method"]): d for d in doc["rounds"]
                      if d["kind"] == kind and d["task"] == task}
            wave = {d["method"]: d for d in doc["wave"] if d["kind"] == kind and d["task"] == task}
            body = [[pid] + [_fmt(rounds.get((pid, c), {}).get("auroc")) for c in codes]
                    for pid in doc["participants"]]
            body.append(["wAVE"] + [_fmt(wave.get(c, {}).get("auroc")) for c in codes])
            lines += _md_table(["participant"] + codes, body) + [""]
            lines += ["### AUROC by test session", ""]
            cells = sorted({(r["round"], r["participant"], r["test_session"]) for r in sel})
            lookup = {(r["participant"], r["test_session"], r["method"]): r for r in sel}
            body = []
            for _, pid, k in cells:
                body.append([pid, str(k)] + [_fmt(lookup[(pid, k, c)]["auroc"]) if (pid, k, c) in lookup else "n/a"
                                             for c in codes])
            lines += _md_table(["participant", "session"] + codes, body) + [""]
            if "PER" in codes:
                alphas = [f"{pid}-S{k}: {lookup[(pid, k, 'PER')]['alpha']:.1f}" for _, pid, k in cells
                          if (pid, k, "PER") in lookup and lookup[(pid, k, "PER")]["alpha"] == lookup[(pid, k, "PER")]["alpha"]]
                if alphas:
                    lines += ["Chosen alpha per cell: " + "; ".join(alphas) + ".", ""]
            merged = {}
            for c in codes:
                suffix = f"_{c}_{kind}_{task}.roc.csv"
                curves = [read_roc(p) for p in roc_files if p.name.endswith(suffix)]
                if curves:
                    merged[c] = merge_curves(curves)
            if merged:
                for c, curve in merged.items():
                    name = f"merged_roc_{c}_{kind}_{task}.csv"
                    with open(out / name, "w", newline="") as fh:
                        w = csv.writer(fh, lineterminator="\n")
                        w.writerow(("fpr", "tpr"))
                        w.writerows((repr(float(a)), repr(float(b))) for a, b in curve)
                lines += ["Merged ROC curves: " + ", ".join(f"`merged_roc_{c}_{kind}_{task}.csv`" for c in merged)
                          + ".", ""]
                if figures:
                    fig_name = f"roc_{kind}_{task}.png"
                    _plot_roc(merged, f"{kind} / {task}", out / fig_name)
                    lines += [f"![ROC curves]({fig_name})", ""]
            if figures and sel:
                fig_name = f"sessions_{kind}_{task}.png"
                _plot_sessions(sel, codes, f"{kind} / {task}", out / fig_name)
                lines += [f"![AUROC by session]({fig_name})", ""]
    failed = [d for d in doc["cells"] if d["status"] != "ok"]
    if failed:
        lines += ["## Cells without a score", ""]
        lines += [f"- {d['key']}: {d['status']} ({d['reason']})" for d in failed] + [""]
    summary = out / "summary.md"
    summary.write_text("\n".join(lines))
    return summary
