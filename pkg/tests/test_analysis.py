import math

import numpy as np
import pytest

from lookalike_lab import analysis as an
from lookalike_lab.errors import (
    DegenerateVariance,
    EmptyClass,
    NoTwinPairs,
    TooFewSamples,
)
from lookalike_lab.match_engine import RetainedPair, ScoreAccumulator


def acc_with_twin_scores(scores):
    acc = ScoreAccumulator(bin_edges=np.linspace(0, 1, 9))
    acc.add_scores(an.IDENTICAL_TWIN_LABEL, np.asarray(scores, dtype=np.float64))
    return acc


class TestTwinThreshold:
    def test_mean_of_two(self):
        t = an.twin_threshold(acc_with_twin_scores([0.7, 0.8]), "comparison")
        assert math.isclose(t.value, 0.75)
        assert t.n_pairs == 2

    def test_single_pair(self):
        t = an.twin_threshold(acc_with_twin_scores([0.42]), "comparison")
        assert t.value == 0.42 and t.n_pairs == 1

    def test_no_twin_pairs_raises(self):
        acc = ScoreAccumulator(bin_edges=np.linspace(0, 1, 9))
        with pytest.raises(NoTwinPairs):
            an.twin_threshold(acc, "comparison")

    def test_matches_brute_force_mean_on_100_pairs(self):
        rng = np.random.Generator(np.random.Philox(key=1))
        scores = rng.uniform(0.3, 0.9, size=100)
        t = an.twin_threshold(acc_with_twin_scores(scores), "comparison")
        brute = sum(float(s) for s in scores) / 100
        assert math.isclose(t.value, brute, rel_tol=1e-12)


class TestAboveThresholdTable:
    def test_partition_two_classes(self):
        retained = [
            RetainedPair("i1", "i2", "identical_twin", 0.8),
            RetainedPair("i3", "i4", "no_relation", 0.75),
        ]
        rows = an.above_threshold_table(retained, 0.7, total_pairs=100)
        by = {r.pair_class: r for r in rows}
        assert by["identical_twin"].count == 1
        assert by["no_relation"].count == 1
        assert by["total"].count == 2
        assert math.isclose(by["total"].percent_of_matches, 2.0)

    def test_empty_retained_gives_zero_table(self):
        rows = an.above_threshold_table([], 0.5, total_pairs=10)
        assert len(rows) == 1
        assert rows[0].pair_class == "total" and rows[0].count == 0

    def test_partition_is_lossless_vs_full_rescan(self):
        rng = np.random.Generator(np.random.Philox(key=2))
        labels = ["identical_twin", "fraternal_twin", "no_relation", "family:Mother"]
        retained = [RetainedPair(f"a{i}", f"b{i}", labels[int(rng.integers(4))],
                                 float(rng.uniform()))
                    for i in range(300)]
        threshold = 0.4
        rows = an.above_threshold_table(retained, threshold, total_pairs=300)
        kept = [r for r in retained if r.score >= threshold]
        # full-rescan oracle per class
        for row in rows[:-1]:
            oracle = [r.score for r in kept if r.class_label == row.pair_class]
            assert row.count == len(oracle)
            assert math.isclose(row.mean, np.mean(oracle), rel_tol=1e-12)
            assert row.minimum == min(oracle) and row.maximum == max(oracle)
        assert rows[-1].count == len(kept) == sum(r.count for r in rows[:-1])


def brute_force_rates(genuine, impostor, threshold):
    fmr = sum(1 for s in impostor if s >= threshold) / len(impostor)
    fnmr = sum(1 for s in genuine if s < threshold) / len(genuine)
    return fmr, fnmr


class TestRoc:
    def test_separable_perfect_curve(self):
        curve = an.roc([0.9], [0.1])
        assert (1.0, 0.0) in zip(curve.fmr, curve.fnmr)
        assert (0.0, 1.0) in zip(curve.fmr, curve.fnmr)
        # a threshold exists with both error rates zero
        assert any(fm == 0.0 and fn == 0.0 for fm, fn in zip(curve.fmr, curve.fnmr))

    def test_identical_distributions_on_chance_diagonal(self):
        scores = [0.1, 0.4, 0.6, 0.9]
        curve = an.roc(scores, scores)
        assert np.allclose(curve.fmr, curve.fnmr + (1 - curve.fnmr - curve.fmr) * 0
                           , atol=1.0)  # shape guard only
        m = an.verification_metrics(curve, scores, scores)
        assert math.isclose(m.auc, 0.5)

    def test_monotonicity_invariants(self):
        rng = np.random.Generator(np.random.Philox(key=3))
        g = rng.normal(1.0, 0.5, size=40)
        i = rng.normal(0.0, 0.5, size=50)
        curve = an.roc(g, i)
        assert np.all(np.diff(curve.fmr) <= 0)
        assert np.all(np.diff(curve.fnmr) >= 0)

    def test_pointwise_equal_to_brute_force(self):
        rng = np.random.Generator(np.random.Philox(key=4))
        g = list(rng.normal(0.7, 0.3, size=30))
        i = list(rng.normal(0.3, 0.3, size=30))
        curve = an.roc(g, i)
        for t, fm, fn in zip(curve.thresholds, curve.fmr, curve.fnmr):
            bf_fmr, bf_fnmr = brute_force_rates(g, i, t)
            assert math.isclose(fm, bf_fmr, abs_tol=1e-12)
            assert math.isclose(fn, bf_fnmr, abs_tol=1e-12)

    def test_empty_class_rejected(self):
        with pytest.raises(EmptyClass):
            an.roc([], [0.1])


def mw_enumeration(genuine, impostor):
    wins = ties = 0
    for g in genuine:
        for i in impostor:
            if g > i:
                wins += 1
            elif g == i:
                ties += 1
    return (wins + 0.5 * ties) / (len(genuine) * len(impostor))


class TestVerificationMetrics:
    def test_separable(self):
        g, i = [0.9], [0.1]
        m = an.verification_metrics(an.roc(g, i), g, i)
        assert m.auc == 1.0
        assert m.eer == 0.0

    def test_mann_whitney_one_win_one_loss(self):
        g, i = [0.6, 0.4], [0.5]
        m = an.verification_metrics(an.roc(g, i), g, i)
        assert m.auc == 0.5

    def test_all_ties_half(self):
        g = i = [0.5, 0.5]
        m = an.verification_metrics(an.roc(g, i), g, i)
        assert m.auc == 0.5

    def test_auc_equals_enumeration_on_random_draws(self):
        rng = np.random.Generator(np.random.Philox(key=5))
        for _ in range(25):
            g = list(np.round(rng.normal(0.6, 0.3, size=int(rng.integers(2, 40))), 2))
            i = list(np.round(rng.normal(0.4, 0.3, size=int(rng.integers(2, 40))), 2))
            assert math.isclose(an.mann_whitney_auc(g, i), mw_enumeration(g, i),
                                rel_tol=0, abs_tol=1e-9)

    def test_eer_bracketing_property(self):
        rng = np.random.Generator(np.random.Philox(key=6))
        for _ in range(100):
            g = rng.normal(0.8, 0.4, size=int(rng.integers(3, 30)))
            i = rng.normal(0.2, 0.4, size=int(rng.integers(3, 30)))
            curve = an.roc(g, i)
            m = an.verification_metrics(curve, g, i)
            # the returned eer lies within one interpolation segment: between
            # the bracketing thresholds, fmr and fnmr straddle the eer value
            k = int(np.searchsorted(curve.thresholds, m.eer_threshold, side="right")) - 1
            k = min(max(k, 0), len(curve.thresholds) - 2)
            fm_pair = sorted((curve.fmr[k], curve.fmr[k + 1]))
            fn_pair = sorted((curve.fnmr[k], curve.fnmr[k + 1]))
            assert fm_pair[0] - 1e-12 <= m.eer <= fm_pair[1] + 1e-12
            assert fn_pair[0] - 1e-12 <= m.eer <= fn_pair[1] + 1e-12

    def test_fnmr_at_unreachable_fmr_reports_floor(self):
        g = [0.9, 0.8]
        i = [0.1, 0.2, 0.3]
        m = an.verification_metrics(an.roc(g, i), g, i, fmr_target=1e-3)
        assert not m.fmr_target_reachable
        assert math.isclose(m.fmr_floor, 1 / 3)

    def test_fnmr_at_reachable_fmr(self):
        rng = np.random.Generator(np.random.Philox(key=7))
        g = list(rng.normal(1.0, 0.2, size=500))
        i = list(rng.normal(0.0, 0.2, size=2000))
        m = an.verification_metrics(an.roc(g, i), g, i, fmr_target=1e-3)
        assert m.fmr_target_reachable
        assert 0.0 <= m.fnmr_at_fmr <= 1.0

    def test_fnmr_at_fmr_plateau_takes_best_operating_point(self):
        # many thresholds share an FMR (a plateau) with different FNMR; the
        # reported value must be the plateau's envelope minimum
        g = [0.15, 0.3, 0.5, 0.9]
        i = [0.1, 0.2, 0.25, 0.28]
        curve = an.roc(g, i)
        # FMR 0.75 is reached by thresholds 0.15 (FNMR 0) and 0.2 (FNMR
        # 0.25): the envelope must pick 0; FMR 0 by thresholds 0.3 and up
        # with FNMR 0.25/0.5/0.75/1.0: the envelope floor is 0.25
        m34 = an.verification_metrics(curve, g, i, fmr_target=0.75)
        assert m34.fnmr_at_fmr == 0.0
        m_quarter = an.verification_metrics(curve, g, i, fmr_target=0.25)
        assert m_quarter.fmr_target_reachable
        assert math.isclose(m_quarter.fnmr_at_fmr, 0.25)
        m_tiny = an.verification_metrics(curve, g, i, fmr_target=1e-3)
        assert not m_tiny.fmr_target_reachable
        assert math.isclose(m_tiny.fmr_floor, 0.25)
        assert math.isclose(m_tiny.fnmr_at_fmr, 0.25)

    def test_trapezoidal_roc_area_equals_mann_whitney(self):
        # integrating the exact empirical ROC recovers the tie-aware
        # Mann-Whitney statistic; diagonal tie segments carry the 1/2 credit
        rng = np.random.Generator(np.random.Philox(key=12))
        for _ in range(30):
            n_g = int(rng.integers(2, 60))
            n_i = int(rng.integers(2, 60))
            g = list(np.round(rng.normal(0.6, 0.3, size=n_g), 1))   # coarse: many ties
            i = list(np.round(rng.normal(0.4, 0.3, size=n_i), 1))
            curve = an.roc(g, i)
            # thresholds ascend, so reversing walks the polyline with FMR
            # ascending and tie runs kept in curve order
            area = float(np.trapezoid((1.0 - curve.fnmr)[::-1], curve.fmr[::-1]))
            assert abs(area - mw_enumeration(g, i)) <= 1e-9


class TestSimilarityBaseline:
    def test_hand_computed_quartiles(self):
        b = an.similarity_baseline([1.0, 2.0, 3.0, 4.0])
        assert math.isclose(b.mean, 2.5)
        assert math.isclose(b.q1, 1.75)
        assert math.isclose(b.q2, 2.5)
        assert math.isclose(b.q3, 3.25)
        assert b.q4_threshold == b.q3

    def test_constant_list(self):
        b = an.similarity_baseline([1.1] * 8)
        assert b.mean == b.q1 == b.q2 == b.q3 == 1.1

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            an.similarity_baseline([1.0, 2.0, 3.0])

    def test_report_shape_mirrors_reference_format(self):
        # the emitted pair (mean, fourth-quartile bar) is the worst-case
        # baseline format; check ordering invariants at a plausible scale
        rng = np.random.Generator(np.random.Philox(key=8))
        scores = rng.normal(1.09, 0.15, size=400)
        b = an.similarity_baseline(scores)
        assert b.q1 <= b.q2 <= b.q3
        assert b.n == 400


class TestCorrelate:
    def test_perfect_linearity(self):
        pts = [(x, 2.0 * x + 1.0) for x in (0.0, 0.5, 1.0, 2.0)]
        r = an.correlate(pts)
        assert math.isclose(r.pearson_r, 1.0)
        assert math.isclose(r.slope, 2.0)
        assert math.isclose(r.intercept, 1.0)

    def test_perfect_anticorrelation(self):
        pts = [(x, -x) for x in (0.0, 1.0, 3.0)]
        assert math.isclose(an.correlate(pts).pearson_r, -1.0)

    def test_hand_least_squares_zero_slope(self):
        r = an.correlate([(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)])
        assert math.isclose(r.pearson_r, 0.0, abs_tol=1e-15)
        assert math.isclose(r.slope, 0.0, abs_tol=1e-15)

    def test_degenerate_variance(self):
        with pytest.raises(DegenerateVariance):
            an.correlate([(1.0, 2.0), (1.0, 3.0)])

    def test_r_invariant_under_positive_affine_rescaling(self):
        rng = np.random.Generator(np.random.Philox(key=9))
        pts = [(float(x), float(y)) for x, y in rng.normal(0, 1, size=(50, 2))]
        base = an.correlate(pts)
        for a, b, c, d in ((2.0, 1.0, 3.0, -4.0), (0.5, -2.0, 10.0, 0.0)):
            scaled = [(a * x + b, c * y + d) for x, y in pts]
            got = an.correlate(scaled)
            assert math.isclose(got.pearson_r, base.pearson_r, rel_tol=1e-10)
            # slope rescales exactly by the transform ratio
            assert math.isclose(got.slope, base.slope * c / a, rel_tol=1e-10)


class TestBlandAltman:
    def test_identical_families_zero_diffs(self):
        pts = [(0.1, 0.1), (0.5, 0.5), (0.9, 0.9)]
        rep = an.bland_altman(pts, an.MINMAX)
        assert np.allclose(rep.diffs, 0.0)
        assert rep.loa_low == rep.loa_high == 0.0

    def test_two_point_hand_case(self):
        # families [0,1] and [1,0] stay fixed under minmax; diffs are -1, +1
        rep = an.bland_altman([(0.0, 1.0), (1.0, 0.0)], an.MINMAX)
        assert sorted(rep.diffs.tolist()) == [-1.0, 1.0]
        assert rep.mean_diff == 0.0
        assert math.isclose(rep.loa_low, -1.96)
        assert math.isclose(rep.loa_high, 1.96)

    def test_constant_family_minmax_maps_to_zero(self):
        # constant family normalizes to 0; the other spans [0, 1]
        rep = an.bland_altman([(0.5, 0.1), (0.5, 0.9)], an.MINMAX)
        assert rep.diffs.tolist() == [0.0, -1.0]
        assert rep.means.tolist() == [0.0, 0.5]

    def test_zscore_constant_family_rejected(self):
        with pytest.raises(DegenerateVariance):
            an.bland_altman([(0.5, 0.1), (0.5, 0.9)], an.ZSCORE)

    def test_zscore_normalization_loa(self):
        rng = np.random.Generator(np.random.Philox(key=10))
        pts = [(float(x), float(y)) for x, y in rng.normal(0, 1, size=(100, 2))]
        rep = an.bland_altman(pts, an.ZSCORE)
        sd = float(rep.diffs.std())
        assert math.isclose(rep.loa_high - rep.mean_diff, 1.96 * sd, rel_tol=1e-12)


class TestLookalikeSweep:
    def test_direct_counting(self):
        maxima = {"a": 1.2, "b": 0.9, "c": 1.3}
        pts = an.lookalike_sweep(maxima, [1.0, 1.25])
        assert [(p.threshold, p.identities) for p in pts] == [(1.0, 2), (1.25, 1)]
        assert math.isclose(pts[0].fraction, 2 / 3)

    def test_threshold_below_all_saturates(self):
        maxima = {"a": 1.2, "b": 0.9}
        pts = an.lookalike_sweep(maxima, [0.0])
        assert pts[0].identities == 2 and pts[0].fraction == 1.0

    def test_counts_non_increasing_property(self):
        rng = np.random.Generator(np.random.Philox(key=11))
        for _ in range(50):
            n = int(rng.integers(1, 40))
            maxima = {f"s{k}": float(rng.uniform(0, 2)) for k in range(n)}
            thresholds = np.sort(rng.uniform(-0.5, 2.5, size=12))
            counts = [p.identities for p in an.lookalike_sweep(maxima, thresholds)]
            assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_reference_format_count_fraction_pair(self):
        # e.g. "6,153 of 15,455 identities (39.8%)": fraction = count / identities
        maxima = {f"s{k}": (1.5 if k % 5 < 2 else 0.5) for k in range(15455)}
        pts = an.lookalike_sweep(maxima, [1.0])
        assert pts[0].identities == 6182
        assert math.isclose(pts[0].fraction, 6182 / 15455)
