"""Per-point improvement, Pearson agreement, and the MMD similarity test."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from ensdiag.errors import ValidationError
from ensdiag.improvement import (
    improvement_similarity_test,
    median_heuristic_bandwidth,
    mmd2_unbiased,
    mmd_threshold,
    pearson_r,
    per_point_improvement,
)


def mmd2_loops(x, y, h):
    """Literal double-sum transcription of the unbiased estimator."""
    m, n = len(x), len(y)
    k = lambda u, v: np.exp(-np.sum((u - v) ** 2) / (2.0 * h * h))
    sx = sum(k(x[i], x[j]) for i in range(m) for j in range(m) if i != j)
    sy = sum(k(y[i], y[j]) for i in range(n) for j in range(n) if i != j)
    sxy = sum(k(x[i], y[j]) for i in range(m) for j in range(n))
    return sx / (m * (m - 1)) + sy / (n * (n - 1)) - 2.0 * sxy / (m * n)


class TestPerPointImprovement:
    def test_identical_models_zero(self, rng):
        probs = rng.dirichlet(np.ones(4), size=20)
        labels = rng.integers(0, 4, 20)
        delta = per_point_improvement(probs, probs, labels)
        np.testing.assert_array_equal(delta, np.zeros(20))

    def test_uniform_to_oracle(self):
        # Brier drops from 0.9 (uniform, C=10) to 0 (one-hot correct).
        labels = np.arange(10)
        base = np.full((10, 10), 0.1)
        alt = np.eye(10)
        np.testing.assert_allclose(per_point_improvement(base, alt, labels), np.full(10, 0.9))

    def test_locality(self, rng):
        probs = rng.dirichlet(np.ones(3), size=15)
        labels = rng.integers(0, 3, 15)
        alt = probs.copy()
        alt[4] = np.eye(3)[labels[4]]
        delta = per_point_improvement(probs, alt, labels)
        assert np.all(delta[np.arange(15) != 4] == 0.0)
        assert delta[4] > 0.0

    def test_other_metrics(self, rng):
        probs = rng.dirichlet(np.ones(3), size=15)
        labels = rng.integers(0, 3, 15)
        for metric in ("nll", "zero_one"):
            delta = per_point_improvement(probs, probs, labels, metric=metric)
            np.testing.assert_array_equal(delta, np.zeros(15))


class TestPearson:
    def test_self_correlation(self, rng):
        a = rng.normal(size=30)
        assert pearson_r(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_negative_affine(self, rng):
        a = rng.normal(size=30)
        assert pearson_r(a, -2.0 * a + 3.0) == pytest.approx(-1.0, abs=1e-12)

    def test_hand_value(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        b = np.array([1.0, 3.0, 2.0, 5.0])
        assert pearson_r(a, b) == pytest.approx(0.8315218406202999, abs=1e-15)

    @given(
        scale=st.floats(0.01, 50.0),
        shift=st.floats(-10.0, 10.0),
        seed=st.integers(0, 999),
    )
    @settings(max_examples=30, deadline=None)
    def test_affine_invariance(self, scale, shift, seed):
        r = np.random.default_rng(seed)
        a, b = r.normal(size=20), r.normal(size=20)
        assert abs(pearson_r(scale * a + shift, b) - pearson_r(a, b)) < 1e-12

    def test_zero_variance_rejected(self):
        with pytest.raises(ValidationError):
            pearson_r(np.full(5, 2.0), np.arange(5.0))

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            pearson_r(np.zeros(3), np.zeros(4))

    def test_single_point_rejected(self):
        with pytest.raises(ValidationError):
            pearson_r(np.array([1.0]), np.array([2.0]))

    def test_range(self, rng):
        for _ in range(20):
            a, b = rng.normal(size=12), rng.normal(size=12)
            assert -1.0 - 1e-12 <= pearson_r(a, b) <= 1.0 + 1e-12


class TestMedianBandwidth:
    def test_two_point_cloud(self):
        assert median_heuristic_bandwidth(np.array([[0.0, 0.0], [3.0, 4.0]])) == 5.0

    def test_identical_points_rejected(self):
        with pytest.raises(ValidationError):
            median_heuristic_bandwidth(np.zeros((5, 2)))

    def test_single_point_rejected(self):
        with pytest.raises(ValidationError):
            median_heuristic_bandwidth(np.zeros((1, 2)))

    def test_cap_strides_deterministically(self):
        big = np.column_stack([np.arange(101.0), np.zeros(101)])
        expected = float(np.median(pdist(big[::3])))
        assert median_heuristic_bandwidth(big, cap=50) == expected


class TestMmd2:
    def test_double_loop_oracle(self, rng):
        for m in (5, 17, 50):
            x = rng.normal(size=(m, 2))
            y = rng.normal(size=(m, 2)) + 0.3
            h = median_heuristic_bandwidth(np.vstack([x, y]))
            assert abs(mmd2_unbiased(x, y, h) - mmd2_loops(x, y, h)) < 1e-12

    def test_symmetry(self, rng):
        x = rng.normal(size=(20, 2))
        y = rng.normal(size=(25, 2))
        assert mmd2_unbiased(x, y, 1.0) == pytest.approx(mmd2_unbiased(y, x, 1.0), abs=1e-15)

    def test_identical_point_clouds(self):
        # Every point equal: each term is exactly 1, so 1 + 1 - 2 = 0.
        x = np.tile([0.3, 0.7], (10, 1))
        assert mmd2_unbiased(x, x.copy(), 0.5) == 0.0

    def test_permutation_of_x(self, rng):
        x = rng.normal(size=(30, 2))
        y = x[rng.permutation(30)]
        assert mmd2_unbiased(x, y, 1.0) == pytest.approx(mmd2_unbiased(x, x, 1.0), abs=1e-12)

    def test_null_calibration(self):
        thr = mmd_threshold(100, 0.05)
        ok = 0
        for seed in range(100):
            r = np.random.default_rng(seed)
            x = r.normal(size=(100, 2))
            y = r.normal(size=(100, 2))
            h = median_heuristic_bandwidth(np.vstack([x, y]))
            if abs(mmd2_unbiased(x, y, h)) < thr:
                ok += 1
        assert ok >= 93

    def test_distant_clouds_saturate(self, rng):
        # Tight clouds 10 bandwidths apart: within-terms ~1, cross-term ~0.
        x = rng.normal(scale=0.01, size=(100, 2))
        y = x + np.array([10.0, 0.0])
        stat = mmd2_unbiased(x, y, 1.0)
        assert stat > 1.9
        assert stat > mmd_threshold(100, 0.05)

    def test_small_sample_rejected(self):
        with pytest.raises(ValidationError):
            mmd2_unbiased(np.zeros((1, 2)), np.zeros((5, 2)), 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            mmd2_unbiased(np.zeros((5, 2)), np.zeros((5, 3)), 1.0)

    def test_nonpositive_bandwidth(self):
        with pytest.raises(ValidationError):
            mmd2_unbiased(np.zeros((5, 2)), np.ones((5, 2)), 0.0)

    def test_large_sample_warns(self, rng, monkeypatch):
        monkeypatch.setattr("ensdiag.improvement.MMD_SIZE_WARNING", 10)
        x = rng.normal(size=(11, 1))
        with pytest.warns(RuntimeWarning):
            mmd2_unbiased(x, x[:5], 1.0)


class TestMmdThreshold:
    def test_frozen_values(self):
        assert mmd_threshold(10_000, 0.05) == pytest.approx(0.06923273530409142, abs=1e-15)
        assert mmd_threshold(90_000, 0.05) == pytest.approx(0.02307757843469714, abs=1e-15)

    def test_alpha_one_gives_zero(self):
        assert mmd_threshold(100, 1.0) == 0.0

    @given(m=st.integers(2, 10_000), alpha=st.floats(0.001, 0.5))
    @settings(max_examples=40, deadline=None)
    def test_monotonicity(self, m, alpha):
        assert mmd_threshold(m + 1, alpha) < mmd_threshold(m, alpha)
        assert mmd_threshold(m, alpha / 2.0) > mmd_threshold(m, alpha)

    def test_invalid_arguments(self):
        with pytest.raises(ValidationError):
            mmd_threshold(0, 0.05)
        with pytest.raises(ValidationError):
            mmd_threshold(10, 0.0)
        with pytest.raises(ValidationError):
            mmd_threshold(10, 1.5)


class TestSimilarityTest:
    def test_control_equals_delta_b(self, rng):
        # Identical clouds: the unbiased statistic is slightly negative, never
        # a rejection.
        da = rng.normal(size=200)
        db = 0.5 * da + rng.normal(size=200)
        res = improvement_similarity_test(da, db, db.copy())
        assert res.statistic <= 0.0
        assert not res.reject
        assert res.m == 200

    def test_shifted_control_rejects(self, rng):
        da = rng.normal(size=200)
        db = 0.5 * da + rng.normal(size=200)
        pooled = np.concatenate([db, db]).std(ddof=1)
        res = improvement_similarity_test(da, db, db + 5.0 * pooled)
        assert res.reject
        assert res.statistic > res.threshold

    def test_reject_flag_consistency(self, rng):
        for _ in range(5):
            da = rng.normal(size=50)
            db = rng.normal(size=50)
            control = rng.normal(size=50)
            res = improvement_similarity_test(da, db, control)
            assert res.reject == (res.statistic > res.threshold)
            assert res.threshold == pytest.approx(mmd_threshold(50, res.alpha))

    def test_formatted_layout(self):
        from ensdiag.improvement import MmdTestResult

        res = MmdTestResult(0.00220, 0.069, 0.05, 1.0, 100, False)
        assert res.formatted() == "0.0022 (0.069)"

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            improvement_similarity_test(np.zeros(5), np.zeros(5), np.zeros(6))

    def test_explicit_bandwidth_respected(self, rng):
        da, db, control = rng.normal(size=(3, 40))
        res = improvement_similarity_test(da, db, control, bandwidth=2.5)
        assert res.bandwidth == 2.5
