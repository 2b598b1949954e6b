"""Bipartite soft matching with fused visual/spatial scoring.

Per encoder layer the pipeline is: alternately partition the tokens into
sets A and B, score every (a, b) pair, merge the r best-scoring A tokens
into their favourite B token by size-weighted averaging, and stitch the
survivors back together in their original order. Visual tokens, spatial
tokens, sizes, coordinate centroids and patch lineage all merge in
lockstep under the same pairing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateVectorError,
    IncompatibleScoresError,
    InvalidDimensionError,
    InvalidMergePlanError,
    InvalidSizeError,
    NothingToMergeError,
    ReductionTooLargeError,
    ScheduleInfeasibleError,
    ShapeMismatchError,
)
from .numerics import as_matrix, as_vector, cosine_similarity_matrix, row_softmax_with_bias
from .spatial import PatchGrid, grid_triplets

SCHEDULE_KINDS = ("increase", "decrease", "uniform", "visual_only")


@dataclass
class TokenState:
    """Everything that flows through the encoder for one image.

    features:  (N, D) float32 visual tokens
    sizes:     (N,) float32, number of original patches each token represents
    lineage:   per token, sorted tuple of the original patch indices it covers
    spatial:   (N, Ds) float32 spatial tokens, or None when merging is
               driven by visual similarity alone
    centroids: (N, 3) float32 size-weighted (x, y, z) patch-index centroids,
               kept for metrics and visualization only
    """

    features: np.ndarray
    sizes: np.ndarray
    lineage: list[tuple[int, ...]]
    spatial: np.ndarray | None
    centroids: np.ndarray

    def __post_init__(self):
        n = self.features.shape[0]
        if self.sizes.shape != (n,):
            raise ShapeMismatchError(f"sizes shape {self.sizes.shape} != ({n},)")
        if len(self.lineage) != n:
            raise ShapeMismatchError(f"lineage has {len(self.lineage)} entries, need {n}")
        if self.spatial is not None and self.spatial.shape[0] != n:
            raise ShapeMismatchError(f"spatial rows {self.spatial.shape[0]} != {n}")
        if self.centroids.shape != (n, 3):
            raise ShapeMismatchError(f"centroids shape {self.centroids.shape} != ({n}, 3)")
        if (self.sizes <= 0).any():
            raise InvalidSizeError("token sizes must be positive")

    @property
    def num_tokens(self) -> int:
        return self.features.shape[0]

    @staticmethod
    def initial(
        features: np.ndarray,
        grid: PatchGrid,
        z_levels: np.ndarray | None = None,
        spatial: np.ndarray | None = None,
    ) -> "TokenState":
        """Fresh state with one token per patch, all sizes 1."""
        f = as_matrix(features, "features")
        n = grid.num_patches
        if f.shape[0] != n:
            raise ShapeMismatchError(
                f"{f.shape[0]} feature rows for a grid of {n} patches"
            )
        if z_levels is None:
            z_levels = np.zeros(n, dtype=np.int32)
        triplets = grid_triplets(grid, z_levels)
        return TokenState(
            features=f,
            sizes=np.ones(n, dtype=np.float32),
            lineage=[(i,) for i in range(n)],
            spatial=None if spatial is None else as_matrix(spatial, "spatial"),
            centroids=triplets.astype(np.float32),
        )


@dataclass
class ScoreMatrix:
    """|A| x |B| similarity scores plus the token indices of both sets."""

    values: np.ndarray
    a_indices: np.ndarray
    b_indices: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.a_indices = np.asarray(self.a_indices, dtype=np.int32)
        self.b_indices = np.asarray(self.b_indices, dtype=np.int32)
        if self.values.ndim != 2 or self.values.shape != (
            len(self.a_indices),
            len(self.b_indices),
        ):
            raise ShapeMismatchError(
                f"score shape {self.values.shape} does not match "
                f"{len(self.a_indices)} A and {len(self.b_indices)} B tokens"
            )


@dataclass(frozen=True)
class MergeSchedule:
    """Per-layer merge counts plus the visual/spatial weighting policy."""

    kind: str
    layers: int
    r_per_layer: tuple[int, ...]
    uniform_alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidDimensionError(
                f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}"
            )
        if len(self.r_per_layer) != self.layers:
            raise ShapeMismatchError(
                f"{len(self.r_per_layer)} r values for {self.layers} layers"
            )

    @property
    def total_reduction(self) -> int:
        return sum(self.r_per_layer)


def alpha_at(schedule: MergeSchedule, layer: int) -> float:
    """Visual-vs-spatial weight for a zero-based layer index.

    The increase policy starts fully spatial (alpha_0 = 0) and approaches 1
    linearly; decrease mirrors it; uniform holds a constant; visual_only
    pins alpha to 1 so spatial scores are never consulted.
    """
    if not 0 <= layer < schedule.layers:
        raise IndexError(f"layer {layer} outside [0, {schedule.layers})")
    if schedule.kind == "increase":
        return layer / schedule.layers
    if schedule.kind == "decrease":
        return 1.0 - layer / schedule.layers
    if schedule.kind == "uniform":
        return schedule.uniform_alpha
    return 1.0


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def build_schedule(
    kind: str,
    n0: int,
    retain_fraction: float,
    layers: int,
    uniform_alpha: float = 0.5,
) -> MergeSchedule:
    """Spread the total reduction as evenly as possible across layers.

    The reduction is R = n0 - round(n0 * retain_fraction) (ties round half
    up); every layer merges floor(R/layers) pairs and the first R mod layers
    layers merge one extra. Each layer's count is validated against the
    floor(N/2) bipartite cap.
    """
    if layers < 1:
        raise InvalidDimensionError(f"need at least one layer, got {layers}")
    if not 0.0 < retain_fraction <= 1.0:
        raise InvalidSizeError(f"retain fraction {retain_fraction} outside (0, 1]")
    if retain_fraction * n0 < 1.0:
        raise InvalidSizeError(
            f"retaining {retain_fraction} of {n0} tokens keeps fewer than one"
        )
    reduction = n0 - _round_half_up(n0 * retain_fraction)
    base, extra = divmod(reduction, layers)
    r_per_layer = tuple(base + 1 if i < extra else base for i in range(layers))
    tokens = n0
    for i, r in enumerate(r_per_layer):
        if r > tokens // 2:
            raise ScheduleInfeasibleError(i, r, tokens)
        tokens -= r
    return MergeSchedule(
        kind=kind, layers=layers, r_per_layer=r_per_layer, uniform_alpha=uniform_alpha
    )


def bipartite_partition(
    n: int, protected: frozenset[int] | set[int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Alternate token positions into sets A (even) and B (odd).

    Protected positions are removed from A so they can never be merge
    sources; they stay attendable and, when odd, remain merge targets.
    """
    if n < 2:
        raise NothingToMergeError(f"cannot partition {n} token(s)")
    a = np.arange(0, n, 2, dtype=np.int32)
    b = np.arange(1, n, 2, dtype=np.int32)
    if protected:
        keep = np.array([i not in protected for i in a], dtype=bool)
        a = a[keep]
    return a, b


def fused_score(s_visual: ScoreMatrix, s_spatial: ScoreMatrix, alpha: float) -> ScoreMatrix:
    """Affine blend alpha * visual + (1 - alpha) * spatial.

    The endpoints return the corresponding input matrix bitwise, so a
    schedule that reaches alpha = 1 is indistinguishable from never having
    computed spatial scores.
    """
    if s_visual.values.shape != s_spatial.values.shape:
        raise IncompatibleScoresError(
            f"score shapes differ: {s_visual.values.shape} vs {s_spatial.values.shape}"
        )
    if not (
        np.array_equal(s_visual.a_indices, s_spatial.a_indices)
        and np.array_equal(s_visual.b_indices, s_spatial.b_indices)
    ):
        raise IncompatibleScoresError("score matrices index different token sets")
    if alpha == 1.0:
        values = s_visual.values.copy()
    elif alpha == 0.0:
        values = s_spatial.values.copy()
    else:
        values = s_visual.values * np.float32(alpha)
        values += s_spatial.values * (np.float32(1.0) - np.float32(alpha))
    return ScoreMatrix(values, s_visual.a_indices, s_visual.b_indices)


def bsm_select(scores: ScoreMatrix, r: int) -> list[tuple[int, int]]:
    """Pick the r most similar (a, b) pairs, one target per source.

    Every A token nominates its best B token (ties go to the lowest B
    index); the r largest nominations win (ties go to the lowest A index).
    Several A tokens may share one B target. Returns token-index pairs in
    selection order.
    """
    if r < 0:
        raise ReductionTooLargeError(f"negative merge count {r}")
    n_a = scores.values.shape[0]
    if r > n_a:
        raise ReductionTooLargeError(
            f"cannot merge {r} pairs with only {n_a} source tokens"
        )
    if r == 0:
        return []
    best_b = scores.values.argmax(axis=1)  # first max -> lowest b on ties
    best_score = scores.values[np.arange(n_a), best_b]
    order = np.argsort(-best_score, kind="stable")  # stable -> lowest a on ties
    chosen = order[:r]
    return [
        (int(scores.a_indices[i]), int(scores.b_indices[best_b[i]])) for i in chosen
    ]


def _validate_plan(n: int, pairs: list[tuple[int, int]]) -> None:
    seen_a: set[int] = set()
    b_set = {b for _, b in pairs}
    for a, b in pairs:
        if not (0 <= a < n and 0 <= b < n):
            raise InvalidMergePlanError(f"pair ({a}, {b}) outside 0..{n - 1}")
        if a in seen_a:
            raise InvalidMergePlanError(f"source token {a} merged twice")
        if a in b_set:
            raise InvalidMergePlanError(f"token {a} is both source and target")
        seen_a.add(a)


def _merge_rows(
    rows: np.ndarray, sizes64: np.ndarray, a_idx: np.ndarray, b_idx: np.ndarray,
    survivors: np.ndarray, targets: np.ndarray, target_pos: np.ndarray,
    new_sizes64: np.ndarray,
) -> np.ndarray:
    """Size-weighted row merge; only target rows are recomputed.

    Each target row becomes (s_b f_b + sum s_a f_a) / s_new, accumulated in
    float64 with sources applied in ascending source order (this fixed
    order keeps results bit-reproducible); every other surviving row is
    copied through bit for bit.
    """
    out = rows[survivors]
    acc = rows[targets].astype(np.float64) * sizes64[targets, None]
    np.add.at(
        acc,
        np.searchsorted(targets, b_idx),
        rows[a_idx].astype(np.float64) * sizes64[a_idx, None],
    )
    acc /= new_sizes64[targets, None]
    out[target_pos] = acc.astype(rows.dtype)
    return out


def apply_merge(state: TokenState, pairs: list[tuple[int, int]]) -> TokenState:
    """Merge each (a, b) pair of tokens; survivors keep their original order.

    Visual features, spatial tokens and centroids merge by the same
    size-weighted average; sizes add; lineages union. Token count drops by
    exactly len(pairs).
    """
    if not pairs:
        return state
    n = state.num_tokens
    _validate_plan(n, pairs)
    ordered = sorted(pairs)  # ascending source index, fixed accumulation order
    a_idx = np.fromiter((a for a, _ in ordered), dtype=np.int64, count=len(ordered))
    b_idx = np.fromiter((b for _, b in ordered), dtype=np.int64, count=len(ordered))

    sizes64 = state.sizes.astype(np.float64)
    new_sizes64 = sizes64.copy()
    np.add.at(new_sizes64, b_idx, sizes64[a_idx])

    survivor_mask = np.ones(n, dtype=bool)
    survivor_mask[a_idx] = False
    survivors = np.flatnonzero(survivor_mask)
    targets = np.unique(b_idx)
    # row of each target within the survivor ordering
    target_pos = np.searchsorted(survivors, targets)

    def merge_rows(rows):
        return _merge_rows(
            rows, sizes64, a_idx, b_idx, survivors, targets, target_pos, new_sizes64
        )

    features = merge_rows(state.features)
    spatial = None if state.spatial is None else merge_rows(state.spatial)
    centroids = merge_rows(state.centroids)

    lineage = [list(t) for t in state.lineage]
    for a, b in ordered:
        lineage[b].extend(state.lineage[a])
    new_lineage = [tuple(sorted(lineage[i])) for i in survivors]

    return TokenState(
        features=features,
        sizes=new_sizes64[survivors].astype(np.float32),
        lineage=new_lineage,
        spatial=spatial,
        centroids=centroids,
    )


def merged_pair_groups(
    state: TokenState, pairs: list[tuple[int, int]]
) -> list[tuple[int, ...]]:
    """Each selected pair expressed as the union of its two patch lineages."""
    return [tuple(sorted(state.lineage[a] + state.lineage[b])) for a, b in pairs]


def proportional_attention(q, k, v, sizes) -> np.ndarray:
    """Scaled dot-product attention with a log-size bias over the keys.

    A merged token stands for several patches, so it receives attention in
    proportion to its size; with all sizes 1 this reduces to standard
    attention exactly.
    """
    q = as_matrix(q, "Q")
    k = as_matrix(k, "K")
    v = as_matrix(v, "V")
    sizes = as_vector(sizes, "sizes")
    if (sizes < 1.0).any():
        raise InvalidSizeError("attention sizes must be >= 1")
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0] or sizes.shape[0] != k.shape[0]:
        raise ShapeMismatchError(
            f"incompatible attention shapes Q{q.shape} K{k.shape} V{v.shape} s{sizes.shape}"
        )
    logits = (q @ k.T) / np.float32(math.sqrt(q.shape[1]))
    weights = row_softmax_with_bias(logits, np.log(sizes))
    return weights @ v


def score_tokens(
    rows: np.ndarray, a_indices: np.ndarray, b_indices: np.ndarray
) -> ScoreMatrix:
    """Cosine-similarity score matrix between set-A rows and set-B rows."""
    return ScoreMatrix(
        cosine_similarity_matrix(rows[a_indices], rows[b_indices]),
        a_indices,
        b_indices,
    )


def spatial_score_tokens(
    rows: np.ndarray, a_indices: np.ndarray, b_indices: np.ndarray
) -> ScoreMatrix:
    """Cosine scores for spatial tokens, accumulated in float32.

    Spatial scores only rank candidate pairs inside the per-layer merge
    loop, so single precision is enough there; the wide spatial token
    matrix makes the float64 path measurably slower end to end.
    """
    a = rows[a_indices]
    b = rows[b_indices]
    a_norm = np.sqrt(np.einsum("ij,ij->i", a, a, dtype=np.float64))
    b_norm = np.sqrt(np.einsum("ij,ij->i", b, b, dtype=np.float64))
    for which, norms in (("A", a_norm), ("B", b_norm)):
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise DegenerateVectorError(which, int(zero[0]))
    sims = (a / a_norm[:, None].astype(np.float32)) @ (
        b / b_norm[:, None].astype(np.float32)
    ).T
    return ScoreMatrix(sims, a_indices, b_indices)


def with_features(state: TokenState, features: np.ndarray) -> TokenState:
    """Copy of the state with replaced feature rows (same token count)."""
    if features.shape[0] != state.num_tokens:
        raise ShapeMismatchError(
            f"{features.shape[0]} feature rows for {state.num_tokens} tokens"
        )
    return replace(state, features=features)
