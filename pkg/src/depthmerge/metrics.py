"""Merge-quality and throughput measurement.

Spatial dispersion quantifies how spatially coherent a merge result is:
for every final group we take the within-group variance of the member
patches' (x, y, scaled z) coordinates, weight it by group size, and
average over groups. Singleton-only partitions score exactly 0; scattered
groups score high.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .encoder import EncoderConfig, init_encoder, vit_forward
from .merge import build_schedule
from .spatial import (
    DEFAULT_LEVELS,
    DEFAULT_TOKEN_DIM,
    DepthMap,
    PatchGrid,
    patch_mean_depth,
    quantize_depth_levels,
)
from .synthetic import two_plane_scene
from .trace import MergeTrace

COMPARE_KINDS = ("visual_only", "uniform", "decrease", "increase")


def spatial_dispersion(
    trace: MergeTrace,
    grid: PatchGrid,
    z_levels: np.ndarray | None = None,
    levels: int = DEFAULT_LEVELS,
) -> float:
    """Size-weighted mean within-group coordinate variance of a merge result.

    Patch p sits at (p % w, p // w, z_p * w / levels); the z term uses the
    quantized depth levels of the run and drops out when they are not
    supplied (uniform depth). Group variance is the mean squared distance
    to the group centroid, summed over the three axes.
    """
    w = grid.grid_w
    n = grid.num_patches
    xs = np.arange(n, dtype=np.float64) % w
    ys = np.arange(n, dtype=np.float64) // w
    if z_levels is None:
        zs = np.zeros(n, dtype=np.float64)
    else:
        zs = np.asarray(z_levels, dtype=np.float64) * w / levels
    coords = np.stack([xs, ys, zs], axis=1)

    total = 0.0
    for group in trace.final_groups:
        pts = coords[list(group)]
        var = ((pts - pts.mean(axis=0)) ** 2).mean(axis=0).sum()
        total += len(group) * var
    return total / len(trace.final_groups)


def depth_levels_for(depth: DepthMap | None, grid: PatchGrid, levels: int = DEFAULT_LEVELS):
    """Quantized per-patch depth levels, or None without a depth map."""
    if depth is None:
        return None
    return quantize_depth_levels(patch_mean_depth(depth, grid), levels)


@dataclass
class RunReport:
    """One benchmark row; throughput is images over median wall time."""

    schedule: str
    retain: float
    tokens_initial: int
    tokens_final: int
    wall_time_per_image: float
    throughput: float
    coherence: float

    def as_dict(self) -> dict:
        return {
            "schedule": self.schedule,
            "retain": self.retain,
            "tokens_initial": self.tokens_initial,
            "tokens_final": self.tokens_final,
            "wall_time_per_image": self.wall_time_per_image,
            "throughput": self.throughput,
            "coherence": self.coherence,
        }


def compare_schedules(
    features: np.ndarray,
    depth: DepthMap | None,
    retain: float,
    config: EncoderConfig,
    kinds: tuple[str, ...] = COMPARE_KINDS,
    uniform_alpha: float = 0.5,
    spatial_dim: int = DEFAULT_TOKEN_DIM,
    levels: int = DEFAULT_LEVELS,
) -> list[tuple[str, float]]:
    """Spatial dispersion of the final merge for each schedule kind."""
    grid = config.grid
    params = init_encoder(config)
    z = depth_levels_for(depth, grid, levels)
    rows = []
    for kind in kinds:
        schedule = build_schedule(
            kind, grid.num_patches, retain, config.layers, uniform_alpha=uniform_alpha
        )
        _, trace = vit_forward(
            features, depth, config, schedule,
            params=params, spatial_dim=spatial_dim, levels=levels,
        )
        rows.append((kind, spatial_dispersion(trace, grid, z, levels)))
    return rows


def run_benchmark(
    config: EncoderConfig,
    images: int = 4,
    repetitions: int = 3,
    retain_points: tuple[float, ...] = (0.5, 0.1),
    spatial_dim: int = DEFAULT_TOKEN_DIM,
    levels: int = DEFAULT_LEVELS,
) -> list[RunReport]:
    """Median-of-repetitions throughput for no merging and every
    (schedule, retention) combination, on seeded synthetic scenes.

    Only the encoder forward is timed; scene synthesis, parameter
    initialization and spatial-token prerequisites happen outside the
    clock. Configurations: none, then visual_only and increase at each
    retention point.
    """
    grid = config.grid
    n0 = grid.num_patches
    scenes = [
        two_plane_scene(grid, config.model_dim, config.seed + i) for i in range(images)
    ]
    params = init_encoder(config)

    configurations = [("none", 1.0)]
    for retain in retain_points:
        configurations.append(("visual_only", retain))
        configurations.append(("increase", retain))

    reports = []
    for label, retain in configurations:
        kind = "visual_only" if label == "none" else label
        schedule = build_schedule(kind, n0, retain, config.layers)
        depth_used = None if kind == "visual_only" else True

        totals = []
        final_tokens = n0
        coherence = 0.0
        for _ in range(repetitions):
            start = time.perf_counter()
            results = [
                vit_forward(
                    feats, depth if depth_used else None, config, schedule,
                    params=params, spatial_dim=spatial_dim, levels=levels,
                )
                for feats, depth in scenes
            ]
            totals.append(time.perf_counter() - start)
        final_tokens = results[0][0].num_tokens
        coherence = float(
            np.mean(
                [
                    spatial_dispersion(
                        trace, grid, depth_levels_for(depth, grid, levels), levels
                    )
                    for (_, trace), (_, depth) in zip(results, scenes)
                ]
            )
        )
        median_total = float(np.median(totals))
        reports.append(
            RunReport(
                schedule=label,
                retain=retain,
                tokens_initial=n0,
                tokens_final=final_tokens,
                wall_time_per_image=median_total / images,
                throughput=images / median_total,
                coherence=coherence,
            )
        )
    return reports
