"""Paired one-sided Wilcoxon signed-rank test, Fleiss' kappa and class-balance summaries."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from ..errors import AllZeroDifferences, DegenerateAgreement, RowSumMismatch
from .metrics import midranks

EXACT_MAX_N = 12


@dataclass(frozen=True)
class PairedSample:
    name_a: str
    name_b: str
    values_a: tuple[float, ...]
    values_b: tuple[float, ...]
    keys: tuple = ()

    def __post_init__(self):
        if len(self.values_a) != len(self.values_b) or len(self.values_a) < 1:
            raise ValueError("paired samples need equal, non-zero lengths")
        if self.keys and len(self.keys) != len(self.values_a):
            raise ValueError("one key per pair")

    @classmethod
    def from_mappings(cls, name_a: str, a: Mapping, name_b: str, b: Mapping) -> "PairedSample":
        """Pair two keyed collections; their key sets must agree."""
        if set(a) != set(b):
            missing = sorted(set(a) ^ set(b), key=str)
            raise KeyError(f"unpaired cells: {missing}")
        keys = tuple(sorted(a, key=str))
        return cls(name_a, name_b, tuple(float(a[k]) for k in keys), tuple(float(b[k]) for k in keys), keys)


@dataclass(frozen=True)
class WilcoxonOutcome:
    n_pairs: int
    n_effective: int
    W_plus: float
    Z: float
    p_one_sided: float
    effect_size_r: float
    mode: str

    def as_dict(self) -> dict:
        return asdict(self)


def _exact_upper_tail(n: int, w_plus: float) -> float:
    """P(W+ >= w_plus) for untied ranks 1..n, via the rank-sum count distribution."""
    top = n * (n + 1) // 2
    counts = np.zeros(top + 1, dtype=np.int64)
    counts[0] = 1
    for r in range(1, n + 1):
        counts[r:] = counts[r:] + counts[:-r].copy()
    threshold = int(math.ceil(w_plus - 1e-9))
    return float(counts[threshold:].sum()) / float(2**n)


def wilcoxon_one_sided(sample: PairedSample, zero_method: str = "wilcox") -> WilcoxonOutcome:
    """Test whether ``values_a`` tend to exceed ``values_b``.

    Zero differences are discarded (``zero_method="pratt"`` ranks them and
    then drops their ranks). Without ties and with at most 12 non-zero pairs
    the p-value is exact; otherwise a normal approximation with tie-corrected
    variance and no continuity correction is used. ``Z`` is always the
    normal-approximation statistic; ``r = Z / sqrt(2 * n_pairs)``.
    """
    d = np.asarray(sample.values_a, dtype=np.float64) - np.asarray(sample.values_b, dtype=np.float64)
    n_pairs = d.size
    nonzero = d != 0
    n = int(nonzero.sum())
    if n == 0:
        raise AllZeroDifferences(f"{sample.name_a} and {sample.name_b} are identical on every pair")
    if zero_method == "wilcox":
        dd = d[nonzero]
        ranks = midranks(np.abs(dd))
        w_plus = float(ranks[dd > 0].sum())
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0
        abs_vals = np.abs(dd)
        n_zero = 0
    elif zero_method == "pratt":
        ranks = midranks(np.abs(d))
        w_plus = float(ranks[d > 0].sum())
        n_all = d.size
        n_zero = n_all - n
        mean = (n_all * (n_all + 1) - n_zero * (n_zero + 1)) / 4.0
        var = (n_all * (n_all + 1) * (2 * n_all + 1) - n_zero * (n_zero + 1) * (2 * n_zero + 1)) / 24.0
        abs_vals = np.abs(d[nonzero])
    else:
        raise ValueError(f"unknown zero_method {zero_method!r}")
    _, tie_counts = np.unique(abs_vals, return_counts=True)
    var -= float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    z = (w_plus - mean) / math.sqrt(var) if var > 0 else 0.0
    tied = bool(np.any(tie_counts > 1))
    if n <= EXACT_MAX_N and not tied and n_zero == 0:
        p = _exact_upper_tail(n, w_plus)
        mode = "exact"
    else:
        p = float(norm.sf(z))
        mode = "normal-approx"
    r = z / math.sqrt(2.0 * n_pairs)
    return WilcoxonOutcome(n_pairs, n, w_plus, float(z), min(1.0, max(0.0, p)), float(r), mode)


def fleiss_kappa(ratings, raters: int | None = None) -> float:
    """Chance-corrected agreement for an items x categories count matrix."""
    M = np.asarray(ratings, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] == 0:
        raise ValueError("ratings must be a non-empty 2-D count matrix")
    if np.any(M < 0):
        raise ValueError("counts must be non-negative")
    sums = M.sum(axis=1)
    n = float(sums[0]) if raters is None else float(raters)
    if n < 2 or np.any(sums != n):
        raise RowSumMismatch(f"every item needs exactly {n:g} >= 2 ratings")
    if np.all(M == np.round(M)):
        # integer counts: exact rational arithmetic, so e.g. P = Pe gives 0 exactly
        rows = [[int(c) for c in row] for row in M]
        nn = int(n)
        items = len(rows)
        p_bar = sum(Fraction(sum(c * c for c in row) - nn, nn * (nn - 1)) for row in rows) / items
        col = [sum(row[j] for row in rows) for j in range(M.shape[1])]
        p_e = sum(Fraction(c, items * nn) ** 2 for c in col)
    else:
        items = M.shape[0]
        p_bar = float((((M * M).sum(axis=1) - n) / (n * (n - 1))).mean())
        p_e = float(((M.sum(axis=0) / (items * n)) ** 2).sum())
    if p_e == 1:
        if p_bar == 1:
            return 1.0
        raise DegenerateAgreement("expected agreement is 1")
    return float((p_bar - p_e) / (1 - p_e))


@dataclass
class ClassDistribution:
    task: str
    session_fraction: dict  # (participant, session) -> negative fraction
    participant_mean: dict
    participant_std: dict
    overall_fraction: float
    n_windows: int


def class_distribution(labels_by_session: Mapping[tuple[str, int], Sequence[int]], task: str = "") -> ClassDistribution:
    """Fraction of negative (0) windows per session, with per-participant mean and spread.

    ``labels_by_session`` maps ``(participant, session)`` to window labels;
    dropped labels (-1) are ignored. Empty sessions are skipped. Spread is the
    sample standard deviation across sessions (0 for a single session).
    """
    frac: dict = {}
    total_neg = 0
    total = 0
    for key in sorted(labels_by_session, key=lambda k: (str(k[0]), k[1])):
        y = np.asarray(labels_by_session[key])
        y = y[y >= 0]
        if y.size == 0:
            continue
        frac[key] = float(np.mean(y == 0))
        total_neg += int(np.sum(y == 0))
        total += int(y.size)
    means, stds = {}, {}
    for pid in dict.fromkeys(k[0] for k in frac):
        vals = np.array([v for k, v in frac.items() if k[0] == pid])
        means[pid] = float(vals.mean())
        stds[pid] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    overall = total_neg / total if total else float("nan")
    return ClassDistribution(task, frac, means, stds, overall, total)
