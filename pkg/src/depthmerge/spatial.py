"""Depth-derived spatial tokens.

A depth map is pooled to one mean value per image patch, quantized into
discrete levels, and each patch's (x, y, z) index triplet is sinusoidally
encoded into a fixed-width spatial token. Patch order is row-major
(left-to-right, top-to-bottom), matching the visual tokenizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DepthRangeError, InvalidDimensionError, ShapeMismatchError
from .numerics import sinusoidal_encoding

# 384px images with 14px patches give a 27x27 grid; depth levels default to
# 27 so the z index spans the same range as x and y.
DEFAULT_GRID_SIDE = 27
DEFAULT_LEVELS = 27
DEFAULT_TOKEN_DIM = 66  # three coordinates, 22 encoding dims each


@dataclass(frozen=True)
class PatchGrid:
    """Patch layout of the tokenized image."""

    grid_w: int = DEFAULT_GRID_SIDE
    grid_h: int = DEFAULT_GRID_SIDE
    patch_size: int = 1

    def __post_init__(self):
        if self.grid_w < 1 or self.grid_h < 1 or self.patch_size < 1:
            raise ShapeMismatchError(
                f"grid must be positive, got {self.grid_w}x{self.grid_h} "
                f"patch {self.patch_size}"
            )

    @property
    def num_patches(self) -> int:
        return self.grid_w * self.grid_h


@dataclass(frozen=True)
class DepthMap:
    """Relative depth in [0, 1] at pixel resolution (row-major, shape h x w)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2:
            raise ShapeMismatchError(f"depth map must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise DepthRangeError("depth values must be finite and within [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Rescale raw depth readings to [0, 1]; a constant image maps to 0.

    Monocular relative depth is scale-free, so only the ordering matters.
    """
    v = np.asarray(values, dtype=np.float32)
    if not np.all(np.isfinite(v)):
        raise DepthRangeError("depth values must be finite")
    lo = float(v.min())
    hi = float(v.max())
    if hi == lo:
        return np.zeros_like(v)
    return ((v - lo) / np.float32(hi - lo)).astype(np.float32)


def patch_mean_depth(depth: DepthMap, grid: PatchGrid) -> np.ndarray:
    """Mean depth per patch, flattened row-major: patch (r, c) -> r*grid_w + c."""
    expected = (grid.grid_h * grid.patch_size, grid.grid_w * grid.patch_size)
    if depth.values.shape != expected:
        raise ShapeMismatchError(
            f"depth map is {depth.values.shape[1]}x{depth.values.shape[0]} but the "
            f"grid needs {expected[1]}x{expected[0]} pixels"
        )
    p = grid.patch_size
    blocks = depth.values.reshape(grid.grid_h, p, grid.grid_w, p)
    means = blocks.mean(axis=(1, 3), dtype=np.float64)
    return means.reshape(-1).astype(np.float32)


def quantize_depth(mean_depth: float, levels: int = DEFAULT_LEVELS) -> int:
    """Map a depth in [0, 1] to a level index: floor(d * levels), clamped."""
    if levels < 1:
        raise InvalidDimensionError(f"levels must be >= 1, got {levels}")
    if not (0.0 <= mean_depth <= 1.0):
        raise DepthRangeError(f"depth {mean_depth} outside [0, 1]")
    return min(int(mean_depth * levels), levels - 1)


def quantize_depth_levels(mean_depths: np.ndarray, levels: int = DEFAULT_LEVELS) -> np.ndarray:
    """Vectorized quantize_depth over a vector of patch means."""
    if levels < 1:
        raise InvalidDimensionError(f"levels must be >= 1, got {levels}")
    d = np.asarray(mean_depths, dtype=np.float32)
    if not np.all(np.isfinite(d)) or (d < 0.0).any() or (d > 1.0).any():
        raise DepthRangeError("patch depths must lie within [0, 1]")
    return np.minimum((d.astype(np.float64) * levels).astype(np.int32), levels - 1)


def grid_triplets(grid: PatchGrid, z_levels: np.ndarray) -> np.ndarray:
    """Per-patch (x, y, z) index triplets in row-major patch order, shape (N, 3)."""
    z = np.asarray(z_levels, dtype=np.int32)
    if z.shape != (grid.num_patches,):
        raise ShapeMismatchError(
            f"need {grid.num_patches} z levels, got shape {z.shape}"
        )
    ys, xs = np.divmod(np.arange(grid.num_patches, dtype=np.int32), grid.grid_w)
    return np.stack([xs, ys, z], axis=1)


def encode_triplet(x: int, y: int, z: int, token_dim: int = DEFAULT_TOKEN_DIM) -> np.ndarray:
    """Spatial token for one triplet: concatenated x || y || z encodings."""
    if token_dim % 6 != 0:
        raise InvalidDimensionError(
            f"token dim must be divisible by 6 (three even-width codes), got {token_dim}"
        )
    sub = token_dim // 3
    return np.concatenate(
        [
            sinusoidal_encoding(x, sub),
            sinusoidal_encoding(y, sub),
            sinusoidal_encoding(z, sub),
        ]
    )


def tokens_from_triplets(triplets: np.ndarray, token_dim: int = DEFAULT_TOKEN_DIM) -> np.ndarray:
    """Encode an (N, 3) triplet array into an (N, token_dim) token matrix.

    Rows depend only on the triplet values, so equal triplets produce
    bitwise-equal rows; encodings for each distinct index are computed once.
    """
    if token_dim % 6 != 0:
        raise InvalidDimensionError(
            f"token dim must be divisible by 6 (three even-width codes), got {token_dim}"
        )
    t = np.asarray(triplets, dtype=np.int32)
    if t.ndim != 2 or t.shape[1] != 3:
        raise ShapeMismatchError(f"triplets must have shape (N, 3), got {t.shape}")
    if (t < 0).any():
        raise DepthRangeError("triplet indices must be non-negative")
    sub = token_dim // 3
    table = np.stack(
        [sinusoidal_encoding(i, sub) for i in range(int(t.max()) + 1)]
    )
    return np.concatenate([table[t[:, 0]], table[t[:, 1]], table[t[:, 2]]], axis=1)


def make_spatial_tokens(
    depth: DepthMap,
    grid: PatchGrid,
    token_dim: int = DEFAULT_TOKEN_DIM,
    levels: int = DEFAULT_LEVELS,
) -> np.ndarray:
    """One spatial token per patch from a depth map, shape (N, token_dim)."""
    z = quantize_depth_levels(patch_mean_depth(depth, grid), levels)
    return tokens_from_triplets(grid_triplets(grid, z), token_dim)
