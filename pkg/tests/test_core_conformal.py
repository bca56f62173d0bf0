import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conformal_cal.core_conformal import (
    INCLUDE_ALL,
    CalibrationSet,
    CoverageTarget,
    MultiSampleNegSquared,
    NegSquared,
    PredictionSet,
    build_prediction_set,
    conformal_threshold,
    coverage_eval,
    interval_measure,
    score_multi_sample,
    score_neg_squared,
    set_to_intervals,
    snap_to_grid,
    to_confidence_threshold,
)
from conformal_cal.errors import ContractViolation, InsufficientDataError

from oracles import conformal_threshold_oracle, intervals_oracle

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestScores:
    def test_neg_squared_examples(self):
        assert score_neg_squared(2, 2) == 0
        assert score_neg_squared(2, 5) == -9
        assert score_neg_squared((1, 1), (0, 0)) == -2

    def test_neg_squared_dimension_mismatch(self):
        with pytest.raises(ContractViolation):
            score_neg_squared((1, 2), (1, 2, 3))

    def test_multi_sample_examples(self):
        assert score_multi_sample(2, [1, 5]) == -1
        assert score_multi_sample(5, [1, 5]) == 0
        assert score_multi_sample(2, [7]) == -25 == score_neg_squared(2, 7)

    def test_multi_sample_empty(self):
        with pytest.raises(ContractViolation):
            score_multi_sample(1.0, [])

    @given(finite, st.lists(finite, min_size=1, max_size=8))
    def test_multi_sample_dominates_each_sample(self, y, samples):
        s = score_multi_sample(y, samples)
        assert all(s >= score_neg_squared(y, v) for v in samples)

    @given(st.lists(finite, min_size=1, max_size=20), finite)
    def test_m1_reduces_to_unimodal(self, grid, sample):
        g = np.array(grid)
        a = MultiSampleNegSquared(1).grid_confidences(g, [sample])
        b = NegSquared().grid_confidences(g, [sample])
        np.testing.assert_array_equal(a, b)

    def test_wrong_sample_count(self):
        with pytest.raises(ContractViolation):
            MultiSampleNegSquared(3).grid_confidences(np.arange(3.0), [1.0, 2.0])


class TestThreshold:
    def test_examples(self):
        assert conformal_threshold([1, 2, 3, 4], 0.4) == 3
        assert conformal_threshold([1, 2, 3, 4], 0.1) is INCLUDE_ALL
        assert conformal_threshold(CalibrationSet([7.0]), CoverageTarget(0.5)) == 7

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            conformal_threshold([], 0.1)

    @pytest.mark.parametrize("beta", [0.0, 1.0, -0.1, 1.5])
    def test_bad_beta(self, beta):
        with pytest.raises(ContractViolation):
            CoverageTarget(beta)

    def test_nonfinite_scores(self):
        with pytest.raises(ContractViolation):
            CalibrationSet([1.0, math.nan])

    @given(st.lists(st.integers(-50, 50), min_size=1, max_size=60),
           st.sampled_from([0.01, 0.05, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.75, 0.9]))
    def test_matches_oracle(self, scores, beta):
        want = conformal_threshold_oracle(scores, beta)
        got = conformal_threshold([float(s) for s in scores], beta)
        assert (got is INCLUDE_ALL) if want is None else got == want

    def test_confidence_mapping(self):
        assert to_confidence_threshold(INCLUDE_ALL) == -math.inf
        assert to_confidence_threshold(2.5) == -2.5


class TestPredictionSet:
    def test_examples(self):
        s = build_prediction_set([0, 1, 2], [0.9, 0.2, 0.8], 0.5)
        assert s.mask.tolist() == [True, False, True]
        assert build_prediction_set([0, 1, 2], [0.9, 0.2, 0.8], -math.inf).size == 3
        assert build_prediction_set([0, 1, 2], [0.9, 0.2, 0.8], INCLUDE_ALL).size == 3
        empty = build_prediction_set([0, 1, 2], [0.9, 0.2, 0.8], math.inf)
        assert empty.empty and empty.size == 0

    def test_ties_included(self):
        assert build_prediction_set([0, 1], [0.5, 0.4], 0.5).mask.tolist() == [True, False]

    @given(st.lists(finite, min_size=1, max_size=30), finite, finite)
    def test_monotone_in_threshold(self, conf, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        grid = np.arange(len(conf), dtype=float)
        big = build_prediction_set(grid, conf, lo).mask
        small = build_prediction_set(grid, conf, hi).mask
        assert np.all(big[small])

    def test_intervals_examples(self):
        grid = [0, 1, 2, 3, 4]
        mk = lambda m: PredictionSet(grid, m, 0.0)  # noqa: E731
        assert set_to_intervals(mk([0, 1, 1, 0, 1])) == [(1, 2), (4, 4)]
        assert set_to_intervals(mk([1] * 5)) == [(0, 4)]
        assert set_to_intervals(mk([0] * 5)) == []

    @given(st.lists(st.booleans(), min_size=1, max_size=40))
    def test_intervals_match_scan(self, mask):
        grid = np.cumsum(np.ones(len(mask))) * 0.5
        got = set_to_intervals(PredictionSet(grid, mask, 0.0))
        assert got == intervals_oracle(grid.tolist(), mask)
        # one component per maximal run, measure counts singletons as one spacing
        runs = sum(1 for i, m in enumerate(mask) if m and (i == 0 or not mask[i - 1]))
        assert len(got) == runs

    def test_measure(self):
        assert interval_measure([(1.0, 2.0), (4.0, 4.0)], 0.5) == 1.5

    def test_intervals_need_increasing_grid(self):
        with pytest.raises(ContractViolation):
            set_to_intervals(PredictionSet([0, 2, 1], [1, 1, 1], 0.0))


class TestCoverage:
    def test_snap_ties_go_low(self):
        assert snap_to_grid([0.0, 1.0, 2.0], 0.5) == 0
        assert snap_to_grid([0.0, 1.0, 2.0], 1.6) == 2

    def test_examples(self):
        grid = [0.0, 1.0, 2.0]
        full = PredictionSet(grid, [1, 1, 1], 0.0)
        none = PredictionSet(grid, [0, 0, 0], 0.0)
        assert coverage_eval([(0.0, full), (2.0, full)]) == 1.0
        assert coverage_eval([(0.0, none), (2.0, none)]) == 0.0
        part = PredictionSet(grid, [1, 1, 0], 0.0)
        assert coverage_eval([(0.0, part), (1.0, part), (0.9, part), (2.0, part)]) == 0.75

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            coverage_eval([])


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("beta", [0.1, 0.2])
def test_exchangeable_coverage_band(seed, beta):
    """Coverage over 2000 repetitions sits in [1-b, 1-b+1/(n+1)] +- 3 MC SE."""
    rng = np.random.default_rng(seed)
    n, reps = 100, 2000
    cal = rng.standard_normal((reps, n))
    test = rng.standard_normal(reps)
    lam = np.array([conformal_threshold(c, beta) for c in cal])
    cov = float(np.mean(test <= lam))
    se = math.sqrt(0.25 / reps)
    assert 1 - beta - 3 * se <= cov <= 1 - beta + 1 / (n + 1) + 3 * se
