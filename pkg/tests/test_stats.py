import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from longadapt.analysis import PairedSample, class_distribution, fleiss_kappa, wilcoxon_one_sided
from longadapt.errors import AllZeroDifferences, RowSumMismatch


def diffs_sample(d):
    d = np.asarray(d, dtype=float)
    return PairedSample("a", "b", tuple(d), tuple(np.zeros_like(d)))


def enumerate_upper_tail(abs_d, w_plus):
    """P(W+ >= observed) over all 2^n sign assignments of the given ranks."""
    ranks = np.argsort(np.argsort(abs_d)) + 1
    hits = sum(1 for signs in itertools.product((0, 1), repeat=len(ranks))
               if sum(r for r, s in zip(ranks, signs) if s) >= w_plus - 1e-9)
    return hits / 2 ** len(ranks)


def test_worked_example():
    res = wilcoxon_one_sided(diffs_sample([1, 2, 3, -1, 4, 5]))
    assert res.W_plus == 19.5
    assert res.mode == "normal-approx"
    # mean 10.5, variance 91/4 - (2^3 - 2)/48
    assert abs(res.Z - 9.0 / math.sqrt(22.75 - 0.125)) <= 1e-12
    assert round(res.Z, 3) == 1.892


def test_five_positive_exact():
    res = wilcoxon_one_sided(diffs_sample([0.5, 1.1, 2.3, 3.7, 4.2]))
    assert res.mode == "exact"
    assert res.p_one_sided == 1 / 32


def test_all_zero():
    with pytest.raises(AllZeroDifferences):
        wilcoxon_one_sided(diffs_sample([0, 0, 0]))


def test_zeros_discarded_and_r_uses_all_pairs():
    res = wilcoxon_one_sided(diffs_sample([0.0, 1.0, 2.0, -3.0, 4.0]))
    assert res.n_pairs == 5 and res.n_effective == 4
    assert abs(res.effect_size_r - res.Z / math.sqrt(10)) <= 1e-15


def test_reported_effect_size_convention():
    # 15 paired sessions, reported Z = 2.101 and r = .384
    assert round(2.101 / math.sqrt(2 * 15), 3) == 0.384


@pytest.mark.parametrize("seed", range(60))
def test_exact_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 11))
    d = rng.permutation(np.arange(1, n + 1)) * rng.choice((-1.0, 1.0), n) + rng.normal(0, 0.01, n)
    res = wilcoxon_one_sided(diffs_sample(d))
    assert res.mode == "exact"
    assert abs(res.p_one_sided - enumerate_upper_tail(np.abs(d), res.W_plus)) <= 1e-12


def test_exact_and_normal_agree_at_twelve():
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        d = rng.normal(0.3, 1.0, 12)
        exact = wilcoxon_one_sided(diffs_sample(d))
        assert exact.mode == "exact"
        worst = max(worst, abs(exact.p_one_sided - float(norm.sf(exact.Z))))
    assert worst < 0.02


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=25))
def test_outcome_invariants(vals):
    if all(v == 0 for v in vals):
        return
    res = wilcoxon_one_sided(diffs_sample(vals))
    n = res.n_effective
    assert 0.0 <= res.p_one_sided <= 1.0
    assert res.W_plus <= n * (n + 1) / 2
    assert abs(res.effect_size_r - res.Z / math.sqrt(2 * len(vals))) <= 1e-12


def test_pratt_keeps_zero_ranks():
    res = wilcoxon_one_sided(diffs_sample([0, 1, 2, 3]), zero_method="pratt")
    assert res.W_plus == 2 + 3 + 4
    assert res.mode == "normal-approx"


def test_paired_sample_from_mappings():
    s = PairedSample.from_mappings("PER", {("P1", 2): 0.9, ("P1", 3): 0.8}, "GEN", {("P1", 3): 0.7, ("P1", 2): 0.6})
    assert s.values_a == (0.9, 0.8) and s.values_b == (0.6, 0.7)
    with pytest.raises(KeyError):
        PairedSample.from_mappings("a", {1: 1.0}, "b", {2: 1.0})


def fleiss_reference(M):
    M = [[Fraction(c) for c in row] for row in M]
    n = sum(M[0])
    N = len(M)
    p_bar = sum((sum(c * c for c in row) - n) / (n * (n - 1)) for row in M) / N
    cols = [sum(row[j] for row in M) / (N * n) for j in range(len(M[0]))]
    p_e = sum(p * p for p in cols)
    if p_e == 1:
        return None
    return (p_bar - p_e) / (1 - p_e)


def test_fleiss_examples():
    assert fleiss_kappa([[3, 0], [2, 1], [1, 2]]) == 0.0
    assert fleiss_kappa([[2, 0], [0, 2]]) == 1.0
    assert fleiss_kappa([[0, 4, 0], [4, 0, 0], [0, 0, 4]]) == 1.0


def test_fleiss_errors():
    with pytest.raises(RowSumMismatch):
        fleiss_kappa([[2, 0], [1, 2]])
    # every rater always picks one category: expected agreement 1 and observed 1
    assert fleiss_kappa([[3, 0], [3, 0]]) == 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_fleiss_matches_reference_and_relabeling(seed):
    rng = np.random.default_rng(seed)
    n, k, items = int(rng.integers(2, 6)), int(rng.integers(2, 5)), int(rng.integers(2, 8))
    M = np.array([rng.multinomial(n, rng.dirichlet(np.ones(k))) for _ in range(items)])
    ref = fleiss_reference(M)
    if ref is None:
        return
    ref = float(ref)
    assert abs(fleiss_kappa(M) - ref) <= 1e-12
    assert abs(fleiss_kappa(M[:, rng.permutation(k)]) - ref) <= 1e-12


def test_class_distribution():
    d = class_distribution({("P1", 1): [0, 0, 1, 1], ("P1", 2): [1, 1, 1], ("P2", 1): [0, 1, -1]}, "arousal")
    assert d.session_fraction[("P1", 1)] == 0.5
    assert d.session_fraction[("P1", 2)] == 0.0
    assert d.session_fraction[("P2", 1)] == 0.5
    assert d.participant_mean["P1"] == 0.25
    assert abs(d.participant_std["P1"] - np.std([0.5, 0.0], ddof=1)) <= 1e-15
    assert d.participant_std["P2"] == 0.0
    assert d.n_windows == 9 and abs(d.overall_fraction - 3 / 9) <= 1e-15
