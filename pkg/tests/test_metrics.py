import random

import numpy as np
import pytest

from oracles import (
    brute_auc_pr,
    brute_auc_roc,
    brute_point_adjust,
    mann_whitney,
)
from tama.core import AnomalyInterval, AnomalyType
from tama.metrics import (
    auc_pr,
    auc_roc,
    pat_sweep,
    per_type_f1,
    point_adjust,
    prf,
)


class TestPointAdjust:
    def test_full_adjustment_from_single_hit(self):
        out = point_adjust([AnomalyInterval(10, 20)], {15}, alpha=0.0)
        assert out == set(range(10, 21))

    def test_alpha_pair(self):
        truth = [AnomalyInterval(0, 9)]
        pred = {0, 1, 2}
        # overlap 3 vs thresholds 2.5 and 5
        assert point_adjust(truth, pred, 0.25) == set(range(10))
        assert point_adjust(truth, pred, 0.5) == {0, 1, 2}

    def test_empty_prediction(self):
        truth = [AnomalyInterval(3, 7)]
        for alpha in (0.0, 0.5, 1.0):
            assert point_adjust(truth, set(), alpha) == set()

    def test_alpha_one_is_identity(self):
        truth = [AnomalyInterval(0, 9)]
        pred = {1, 5, 30}
        assert point_adjust(truth, pred, 1.0) == pred

    def test_alpha_monotone(self):
        rng = random.Random(0)
        for _ in range(50):
            truth = [AnomalyInterval(5, 20), AnomalyInterval(40, 41)]
            pred = set(rng.sample(range(60), rng.randint(0, 25)))
            prev = None
            for alpha in (0.0, 0.3, 0.6, 1.0):
                cur = point_adjust(truth, pred, alpha)
                if prev is not None:
                    assert cur <= prev
                prev = cur

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            point_adjust([], set(), 1.5)


class TestPrf:
    def test_exact_match(self):
        assert prf([AnomalyInterval(10, 20)], set(range(10, 21)), 50) == (1.0, 1.0, 1.0)

    def test_one_false_positive(self):
        p, r, f1 = prf([AnomalyInterval(10, 20)], {5} | set(range(10, 21)), 50)
        assert p == pytest.approx(11 / 12)
        assert r == 1.0
        assert f1 == pytest.approx(22 / 23)

    def test_empty_prediction_convention(self):
        assert prf([AnomalyInterval(10, 20)], set(), 50) == (1.0, 0.0, 0.0)


class TestAucRoc:
    def test_perfect_separation(self):
        assert auc_roc(np.array([0.9, 0.1]), [AnomalyInterval(0, 0)]) == 1.0

    def test_hand_case(self):
        # scores (3,2,1,0), truth {0,2}: 3 of 4 pos/neg pairs ordered correctly
        value = auc_roc(np.array([3, 2, 1, 0]), [AnomalyInterval(0, 0), AnomalyInterval(2, 2)])
        assert value == pytest.approx(0.75)

    def test_perfectly_wrong(self):
        assert auc_roc(np.array([0.1, 0.9]), [AnomalyInterval(0, 0)]) == 0.0

    def test_matches_mann_whitney_with_ties(self):
        rng = random.Random(1)
        for _ in range(100):
            t = rng.randint(4, 40)
            scores = [rng.randint(0, 4) for _ in range(t)]
            start = rng.randint(0, t - 2)
            end = rng.randint(start, min(t - 1, start + 5))
            if end == t - 1 and start == 0:
                end = t - 2
            truth = [AnomalyInterval(start, end)]
            truth_points = set(range(start, end + 1))
            got = auc_roc(np.array(scores), truth)
            assert got == pytest.approx(mann_whitney(scores, truth_points), abs=1e-12)


class TestAucPr:
    def test_perfect_ranking(self):
        scores = np.array([5.0, 4.0, 0.0, 0.0, 0.0])
        assert auc_pr(scores, [AnomalyInterval(0, 1)]) == pytest.approx(1.0)

    def test_constant_scores(self):
        scores = np.zeros(10)
        truth = [AnomalyInterval(0, 1)]
        # single operating point at prevalence 0.2, interpolated to (0, 1)
        got = auc_pr(scores, truth, pa_alpha=None)
        assert got == pytest.approx(brute_auc_pr(list(scores), truth, None), abs=1e-12)

    def test_matches_brute_force(self):
        rng = random.Random(2)
        for _ in range(100):
            t = rng.randint(5, 60)
            scores = [rng.randint(0, 8) for _ in range(t)]
            truth = [AnomalyInterval(i, i) for i in sorted(rng.sample(range(t), rng.randint(1, 3)))]
            for alpha in (None, 0.0, 0.5):
                got = auc_pr(np.array(scores), truth, alpha)
                want = brute_auc_pr(scores, truth, alpha)
                assert got == pytest.approx(want, abs=1e-9)
                got_roc = auc_roc(np.array(scores), truth, alpha)
                want_roc = brute_auc_roc(scores, truth, alpha)
                if not (np.isnan(got_roc) and np.isnan(want_roc)):
                    assert got_roc == pytest.approx(want_roc, abs=1e-9)


class TestPerTypeF1:
    def test_exact_match(self):
        type_truth = {1: AnomalyType.POINT, 5: AnomalyType.TREND, 6: AnomalyType.TREND}
        pred = {1, 5, 6}
        classes = dict(type_truth)
        out = per_type_f1(type_truth, pred, classes)
        assert out == {AnomalyType.POINT: 1.0, AnomalyType.TREND: 1.0}

    def test_absent_type_omitted(self):
        out = per_type_f1({1: AnomalyType.POINT}, {1}, {1: AnomalyType.POINT})
        assert AnomalyType.SHAPELET not in out

    def test_misclassification(self):
        type_truth = {i: AnomalyType.SHAPELET for i in range(5)}
        pred = set(range(5))
        classes = {i: AnomalyType.TREND for i in range(5)}
        out = per_type_f1(type_truth, pred, classes)
        assert out[AnomalyType.SHAPELET] == 0.0
        assert out[AnomalyType.TREND] == 0.0


class TestPatSweep:
    def test_endpoints(self):
        rng = random.Random(3)
        scores = np.array([rng.randint(0, 6) for _ in range(50)])
        truth = [AnomalyInterval(10, 19), AnomalyInterval(30, 33)]
        curve = pat_sweep(scores, truth, [0.0, 1.0], c0=1.0)
        pred = {int(i) for i in np.flatnonzero(scores >= 1.0)}
        _, _, f1_full = prf(truth, brute_point_adjust(truth, pred, 0.0), 50)
        _, _, f1_raw = prf(truth, pred, 50)
        assert curve[0].f1 == pytest.approx(f1_full)
        assert curve[1].f1 == pytest.approx(f1_raw)
        assert curve[0].auc_pr == pytest.approx(auc_pr(scores, truth, 0.0))
        assert curve[1].auc_pr == pytest.approx(auc_pr(scores, truth, 1.0))

    def test_adjusted_set_shrinks_with_alpha(self):
        rng = random.Random(4)
        truth = [AnomalyInterval(5, 24)]
        pred = set(rng.sample(range(40), 12))
        sizes = [len(point_adjust(truth, pred, a)) for a in (0, 0.25, 0.5, 0.75, 1.0)]
        assert sizes == sorted(sizes, reverse=True)
