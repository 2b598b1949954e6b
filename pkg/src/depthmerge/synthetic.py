"""Seeded synthetic inputs for demos, benchmarks and coherence studies.

No pretrained weights are in scope, so controllable structure stands in
for real images: each patch gets a cluster feature plus noise, and the
two-plane scene adds a foreground rectangle at a distinct depth. The
cluster pattern is diagonal stripes, so patches with similar features sit
far apart while spatial neighbours look different; that is exactly the
regime where early visual similarity misleads the merger.
"""

from __future__ import annotations

import numpy as np

from .spatial import DepthMap, PatchGrid


def synthetic_tokens(
    grid: PatchGrid,
    dim: int,
    seed: int,
    clusters: int = 4,
    noise: float = 0.25,
) -> np.ndarray:
    """Cluster-structured features, one row per patch (row-major)."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, size=(clusters, dim))
    ys, xs = np.divmod(np.arange(grid.num_patches), grid.grid_w)
    labels = (xs + ys) % clusters
    feats = centers[labels] + rng.normal(0.0, noise, size=(grid.num_patches, dim))
    return feats.astype(np.float32)


def two_plane_scene(
    grid: PatchGrid,
    dim: int,
    seed: int,
    clusters: int = 4,
    noise: float = 0.25,
) -> tuple[np.ndarray, DepthMap]:
    """Clustered features plus a depth map with a near rectangle on a far field.

    The rectangle's placement and size are seed-dependent but always cover
    roughly a fifth to a half of the grid. Depth is returned at patch
    resolution (patch_size 1 relative to the grid).
    """
    rng = np.random.default_rng(seed ^ 0x5EED)
    w, h = grid.grid_w, grid.grid_h
    rect_w = int(rng.integers(max(2, w // 3), max(3, 2 * w // 3)))
    rect_h = int(rng.integers(max(2, h // 3), max(3, 2 * h // 3)))
    x0 = int(rng.integers(0, w - rect_w + 1))
    y0 = int(rng.integers(0, h - rect_h + 1))
    depth = np.full((h, w), 1.0, dtype=np.float32)
    depth[y0 : y0 + rect_h, x0 : x0 + rect_w] = 0.0
    features = synthetic_tokens(grid, dim, seed, clusters=clusters, noise=noise)
    return features, DepthMap(depth)
