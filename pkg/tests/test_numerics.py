"""Kernel-level checks: cosine scores, encodings, biased softmax, averaging."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthmerge.errors import (
    DegenerateVectorError,
    InvalidDimensionError,
    InvalidSizeError,
    NonFiniteError,
    ShapeMismatchError,
)
from depthmerge.numerics import (
    cosine_similarity_matrix,
    row_softmax_with_bias,
    sinusoidal_encoding,
    weighted_row_average,
)


class TestCosineSimilarity:
    def test_self_similarity_is_one(self):
        s = cosine_similarity_matrix([[3.0, 4.0]], [[3.0, 4.0]])
        assert s.shape == (1, 1)
        assert abs(s[0, 0] - 1.0) < 1e-6

    def test_orthogonal_rows_score_zero(self):
        s = cosine_similarity_matrix([[1.0, 0.0]], [[0.0, 1.0]])
        assert s[0, 0] == pytest.approx(0.0, abs=1e-7)

    def test_45_degree_pair(self):
        # dot = 1, norms 1 and sqrt(2)
        s = cosine_similarity_matrix([[1.0, 0.0]], [[1.0, 1.0]])
        assert s[0, 0] == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-6)

    def test_unit_diagonal_for_self_comparison(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(17, 9)).astype(np.float32)
        s = cosine_similarity_matrix(a, a)
        assert np.abs(np.diag(s) - 1.0).max() < 1e-6

    def test_all_entries_within_unit_interval(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(12, 5)).astype(np.float32)
        b = rng.normal(size=(9, 5)).astype(np.float32)
        s = cosine_similarity_matrix(a, b)
        assert s.min() >= -1.0 - 1e-6
        assert s.max() <= 1.0 + 1e-6

    def test_zero_row_reports_index(self):
        a = np.array([[1.0, 2.0], [0.0, 0.0], [3.0, 4.0]], dtype=np.float32)
        b = np.ones((2, 2), dtype=np.float32)
        with pytest.raises(DegenerateVectorError) as err:
            cosine_similarity_matrix(a, b)
        assert err.value.which == "A"
        assert err.value.row == 1
        with pytest.raises(DegenerateVectorError) as err:
            cosine_similarity_matrix(b, a)
        assert err.value.which == "B"

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            cosine_similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))

    def test_nan_rejected(self):
        with pytest.raises(NonFiniteError):
            cosine_similarity_matrix(np.array([[np.nan, 1.0]]), np.ones((1, 2)))


class TestSinusoidalEncoding:
    def test_index_zero_alternates_zero_one(self):
        np.testing.assert_array_equal(
            sinusoidal_encoding(0, 4), np.array([0, 1, 0, 1], dtype=np.float32)
        )

    def test_index_one_dim_two(self):
        enc = sinusoidal_encoding(1, 2)
        assert enc[0] == pytest.approx(math.sin(1.0), abs=1e-6)
        assert enc[1] == pytest.approx(math.cos(1.0), abs=1e-6)

    @pytest.mark.parametrize("index", [0, 1, 5, 26, 1000])
    def test_norm_is_sqrt_half_dim(self, index):
        enc = sinusoidal_encoding(index, 6)
        assert np.linalg.norm(enc.astype(np.float64)) == pytest.approx(
            math.sqrt(3.0), abs=1e-5
        )

    def test_components_bounded(self):
        enc = sinusoidal_encoding(12345, 10)
        assert np.abs(enc).max() <= 1.0 + 1e-7

    @pytest.mark.parametrize("dim", [4, 8, 22])
    def test_nearby_indices_distinct(self, dim):
        codes = [sinusoidal_encoding(i, dim).tobytes() for i in range(27)]
        assert len(set(codes)) == 27

    def test_odd_dim_rejected(self):
        with pytest.raises(InvalidDimensionError):
            sinusoidal_encoding(3, 5)

    def test_negative_index_rejected(self):
        with pytest.raises(InvalidDimensionError):
            sinusoidal_encoding(-1, 4)


class TestRowSoftmaxWithBias:
    def test_symmetric_logits_split_evenly(self):
        out = row_softmax_with_bias([[0.0, 0.0]], [0.0, 0.0])
        np.testing.assert_allclose(out, [[0.5, 0.5]], atol=1e-7)

    def test_log_bias_acts_as_multiplicity(self):
        out = row_softmax_with_bias([[0.0, 0.0]], [math.log(1.0), math.log(3.0)])
        np.testing.assert_allclose(out, [[0.25, 0.75]], atol=1e-6)

    def test_shift_invariance(self):
        out = row_softmax_with_bias([[5.0, 5.0, 5.0]], [0.0, 0.0, 0.0])
        np.testing.assert_allclose(out, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-6)

    def test_rows_sum_to_one_and_nonnegative(self):
        rng = np.random.default_rng(2)
        logits = (rng.normal(size=(40, 70)) * 30).astype(np.float32)
        bias = rng.normal(size=70).astype(np.float32)
        out = row_softmax_with_bias(logits, bias)
        assert out.min() >= 0.0
        sums = out.sum(axis=1, dtype=np.float64)
        assert np.abs(sums - 1.0).max() < 1e-6

    def test_extreme_logits_stay_finite(self):
        out = row_softmax_with_bias([[1000.0, -1000.0]], [0.0, 0.0])
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-7)

    def test_bias_length_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            row_softmax_with_bias([[0.0, 0.0]], [0.0, 0.0, 0.0])


class TestWeightedRowAverage:
    def test_equal_features_are_fixed_point(self):
        merged, size = weighted_row_average([2.0, 2.0], 1.0, [2.0, 2.0], 5.0)
        np.testing.assert_array_equal(merged, np.array([2, 2], dtype=np.float32))
        assert size == 6.0

    def test_weighting_by_sizes(self):
        merged, size = weighted_row_average([0.0, 0.0], 1.0, [3.0, 0.0], 2.0)
        np.testing.assert_allclose(merged, [2.0, 0.0], atol=1e-7)
        assert size == 3.0

    def test_conserves_weighted_sum(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            f_a = rng.normal(size=8).astype(np.float32)
            f_b = rng.normal(size=8).astype(np.float32)
            s_a = float(rng.integers(1, 20))
            s_b = float(rng.integers(1, 20))
            merged, size = weighted_row_average(f_a, s_a, f_b, s_b)
            lhs = size * merged.astype(np.float64)
            rhs = s_a * f_a.astype(np.float64) + s_b * f_b.astype(np.float64)
            np.testing.assert_allclose(lhs, rhs, rtol=1e-6)

    @pytest.mark.parametrize("s_a,s_b", [(0.0, 1.0), (1.0, 0.0), (-1.0, 2.0)])
    def test_non_positive_size_rejected(self, s_a, s_b):
        with pytest.raises(InvalidSizeError):
            weighted_row_average([1.0], s_a, [2.0], s_b)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            weighted_row_average([1.0, 2.0], 1.0, [1.0], 1.0)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-100, 100, width=32), min_size=2, max_size=6),
    st.lists(st.floats(-100, 100, width=32), min_size=2, max_size=6),
    st.integers(1, 50),
    st.integers(1, 50),
)
def test_weighted_average_conservation_property(f_a, f_b, s_a, s_b):
    d = min(len(f_a), len(f_b))
    merged, size = weighted_row_average(f_a[:d], float(s_a), f_b[:d], float(s_b))
    lhs = size * merged.astype(np.float64)
    rhs = s_a * np.asarray(f_a[:d], np.float64) + s_b * np.asarray(f_b[:d], np.float64)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-5, atol=1e-4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 40))
def test_encoding_components_bounded_property(index, half_dim):
    enc = sinusoidal_encoding(index, 2 * half_dim)
    assert enc.shape == (2 * half_dim,)
    assert np.abs(enc).max() <= 1.0 + 1e-7
