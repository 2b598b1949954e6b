"""Depth pooling, quantization and spatial-token construction."""

import numpy as np
import pytest

from depthmerge.errors import (
    DepthRangeError,
    InvalidDimensionError,
    ShapeMismatchError,
)
from depthmerge.spatial import (
    DepthMap,
    PatchGrid,
    encode_triplet,
    grid_triplets,
    make_spatial_tokens,
    minmax_normalize,
    patch_mean_depth,
    quantize_depth,
    quantize_depth_levels,
    tokens_from_triplets,
)


class TestPatchMeanDepth:
    def test_constant_depth(self):
        depth = DepthMap(np.full((6, 6), 0.5, dtype=np.float32))
        means = patch_mean_depth(depth, PatchGrid(3, 3, 2))
        np.testing.assert_allclose(means, 0.5, atol=1e-7)

    def test_two_by_two_patch_mean(self):
        depth = DepthMap(np.array([[0.0, 0.0], [1.0, 1.0]], dtype=np.float32))
        means = patch_mean_depth(depth, PatchGrid(1, 1, 2))
        assert means[0] == pytest.approx(0.5, abs=1e-7)

    def test_left_right_halves(self):
        img = np.zeros((4, 4), dtype=np.float32)
        img[:, :2] = 0.2
        img[:, 2:] = 0.8
        means = patch_mean_depth(DepthMap(img), PatchGrid(2, 2, 2))
        np.testing.assert_allclose(means, [0.2, 0.8, 0.2, 0.8], atol=1e-7)

    def test_row_major_patch_order(self):
        # patch value = its flat index / 10, patch size 1
        img = (np.arange(6, dtype=np.float32) / 10).reshape(2, 3)
        means = patch_mean_depth(DepthMap(img), PatchGrid(3, 2, 1))
        np.testing.assert_allclose(means, np.arange(6) / 10, atol=1e-7)

    def test_dimension_mismatch_reports_expected(self):
        depth = DepthMap(np.zeros((4, 4), dtype=np.float32))
        with pytest.raises(ShapeMismatchError) as err:
            patch_mean_depth(depth, PatchGrid(3, 3, 2))
        assert "6x6" in str(err.value)


class TestQuantizeDepth:
    def test_lower_bound(self):
        assert quantize_depth(0.0, 27) == 0

    def test_upper_bound_clamps(self):
        assert quantize_depth(1.0, 27) == 26

    def test_midpoint(self):
        assert quantize_depth(0.5, 27) == 13  # floor(13.5)

    def test_monotone_non_decreasing(self):
        ds = np.linspace(0.0, 1.0, 500)
        levels = [quantize_depth(float(d), 27) for d in ds]
        assert all(a <= b for a, b in zip(levels, levels[1:]))

    @pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan")])
    def test_out_of_range_rejected(self, bad):
        with pytest.raises(DepthRangeError):
            quantize_depth(bad, 27)

    def test_vectorized_matches_scalar(self):
        ds = np.linspace(0.0, 1.0, 101).astype(np.float32)
        vec = quantize_depth_levels(ds, 27)
        scalar = [quantize_depth(float(d), 27) for d in ds]
        np.testing.assert_array_equal(vec, scalar)


class TestSpatialTokens:
    def test_origin_patch_is_zero_one_pattern(self):
        depth = DepthMap(np.zeros((3, 3), dtype=np.float32))
        tokens = make_spatial_tokens(depth, PatchGrid(3, 3, 1), token_dim=12, levels=27)
        expected = np.tile([0.0, 1.0], 6).astype(np.float32)
        np.testing.assert_array_equal(tokens[0], expected)

    def test_equal_triplets_give_identical_rows(self):
        trip = np.array([[3, 5, 7], [1, 2, 3], [3, 5, 7]], dtype=np.int32)
        tokens = tokens_from_triplets(trip, token_dim=30)
        assert tokens[0].tobytes() == tokens[2].tobytes()
        assert tokens[0].tobytes() != tokens[1].tobytes()

    def test_default_grid_yields_729_rows(self):
        depth = DepthMap(np.random.default_rng(0).random((27, 27)).astype(np.float32))
        tokens = make_spatial_tokens(depth, PatchGrid(27, 27, 1))
        assert tokens.shape == (729, 66)

    def test_token_dim_must_divide_by_six(self):
        depth = DepthMap(np.zeros((2, 2), dtype=np.float32))
        with pytest.raises(InvalidDimensionError):
            make_spatial_tokens(depth, PatchGrid(2, 2, 1), token_dim=16)

    def test_triplet_layout_row_major(self):
        grid = PatchGrid(3, 2, 1)
        trip = grid_triplets(grid, np.arange(6, dtype=np.int32))
        np.testing.assert_array_equal(trip[:, 0], [0, 1, 2, 0, 1, 2])  # x
        np.testing.assert_array_equal(trip[:, 1], [0, 0, 0, 1, 1, 1])  # y
        np.testing.assert_array_equal(trip[:, 2], np.arange(6))

    def test_encode_triplet_matches_bulk(self):
        trip = np.array([[4, 9, 13]], dtype=np.int32)
        bulk = tokens_from_triplets(trip, token_dim=66)
        single = encode_triplet(4, 9, 13, token_dim=66)
        np.testing.assert_array_equal(bulk[0], single)

    def test_similarity_decays_with_single_coordinate_distance(self):
        # enumerate the default 27-grid: moving one coordinate away from any
        # base must not raise cosine similarity. With 22 encoding dims per
        # coordinate the frequency-cosine sum is non-increasing through
        # distance 4 and turns back up at distance 5, so 4 is the honest
        # monotonicity horizon for the default layout.
        def cos(u, v):
            u = u.astype(np.float64)
            v = v.astype(np.float64)
            return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))

        for coord in range(3):
            for base in range(27):
                ref = [7, 11, 19]
                ref[coord] = base
                anchor = encode_triplet(*ref)
                sims = []
                for dist in range(1, 5):
                    if base + dist > 26:
                        break
                    moved = list(ref)
                    moved[coord] = base + dist
                    sims.append(cos(anchor, encode_triplet(*moved)))
                assert all(s1 >= s2 - 1e-9 for s1, s2 in zip(sims, sims[1:]))
                assert all(s < 1.0 for s in sims)


class TestDepthMapValidation:
    def test_rejects_out_of_range(self):
        with pytest.raises(DepthRangeError):
            DepthMap(np.array([[0.0, 1.5]], dtype=np.float32))

    def test_rejects_nan(self):
        with pytest.raises(DepthRangeError):
            DepthMap(np.array([[np.nan]], dtype=np.float32))

    def test_minmax_normalize_spans_unit_interval(self):
        v = minmax_normalize(np.array([[2.0, 4.0], [6.0, 10.0]], dtype=np.float32))
        assert v.min() == 0.0
        assert v.max() == 1.0
        assert v[0, 1] == pytest.approx(0.25)

    def test_minmax_normalize_constant_maps_to_zero(self):
        v = minmax_normalize(np.full((3, 3), 7.0, dtype=np.float32))
        np.testing.assert_array_equal(v, np.zeros((3, 3), dtype=np.float32))
