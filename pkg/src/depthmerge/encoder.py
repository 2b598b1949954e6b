"""Desk-scale transformer encoder wrapping the merge pipeline.

Each layer is pre-norm: norm -> multi-head proportional attention ->
residual -> merge block -> norm -> MLP -> residual. The merge block sits
between attention and MLP and consumes the layer's own (head-averaged)
key features for visual similarity.

Parameters come from a SplitMix64 stream so the same seed reproduces the
same weights bit for bit on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingSpatialTokensError, ShapeMismatchError
from .merge import (
    MergeSchedule,
    TokenState,
    alpha_at,
    apply_merge,
    bipartite_partition,
    bsm_select,
    fused_score,
    merged_pair_groups,
    score_tokens,
    spatial_score_tokens,
    with_features,
)
from .numerics import row_softmax_with_bias
from .spatial import (
    DEFAULT_LEVELS,
    DEFAULT_TOKEN_DIM,
    DepthMap,
    PatchGrid,
    grid_triplets,
    patch_mean_depth,
    quantize_depth_levels,
    tokens_from_triplets,
)
from .trace import MergeTrace, finalize, record_layer

LAYER_NORM_EPS = np.float32(1e-5)
# tanh-form GELU constants
GELU_SCALE = np.float32(0.7978845608028654)  # sqrt(2/pi)
GELU_CUBIC = np.float32(0.044715)

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 27
    model_dim: int = 64
    heads: int = 4
    mlp_ratio: float = 4.0
    grid: PatchGrid = field(default_factory=PatchGrid)
    seed: int = 0
    protected: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ShapeMismatchError(
                f"model dim {self.model_dim} not divisible by {self.heads} heads"
            )

    @property
    def hidden_dim(self) -> int:
        return int(self.model_dim * self.mlp_ratio)


@dataclass
class EncoderLayerParams:
    """Projection and MLP weights plus the two layer-norm parameter pairs."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray


class SplitMix64:
    """Counter-based SplitMix64 stream; output i mixes seed + (i+1)*golden."""

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & _MASK64)
        self._drawn = 0

    def next_raw(self, count: int) -> np.ndarray:
        idx = np.arange(self._drawn + 1, self._drawn + count + 1, dtype=np.uint64)
        self._drawn += count
        z = self._seed + idx * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def uniform(self, count: int) -> np.ndarray:
        """float64 uniforms in [0, 1) from the top 53 bits."""
        return (self.next_raw(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def init_encoder(config: EncoderConfig) -> list[EncoderLayerParams]:
    """Deterministic parameters: uniform(-1, 1)/sqrt(D) weights, identity norms.

    Matrices are drawn row-major from one stream in a fixed order
    (wq, wk, wv, wo, w1, w2 per layer), so equal seeds give bitwise-equal
    parameters.
    """
    d = config.model_dim
    h = config.hidden_dim
    stream = SplitMix64(config.seed)
    scale = 1.0 / math.sqrt(d)

    def draw(rows: int, cols: int) -> np.ndarray:
        u = stream.uniform(rows * cols)
        return ((2.0 * u - 1.0) * scale).astype(np.float32).reshape(rows, cols)

    params = []
    for _ in range(config.layers):
        params.append(
            EncoderLayerParams(
                wq=draw(d, d),
                wk=draw(d, d),
                wv=draw(d, d),
                wo=draw(d, d),
                w1=draw(d, h),
                w2=draw(h, d),
                ln1_gain=np.ones(d, dtype=np.float32),
                ln1_bias=np.zeros(d, dtype=np.float32),
                ln2_gain=np.ones(d, dtype=np.float32),
                ln2_bias=np.zeros(d, dtype=np.float32),
            )
        )
    return params


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + LAYER_NORM_EPS) * gain + bias


def gelu(x: np.ndarray) -> np.ndarray:
    return np.float32(0.5) * x * (
        np.float32(1.0) + np.tanh(GELU_SCALE * (x + GELU_CUBIC * (x * x * x)))
    )


def multi_head_attention(
    h: np.ndarray, params: EncoderLayerParams, heads: int, sizes: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Proportional attention over all heads; returns (output, key matrix).

    The log-size bias is added per key column, so a token merged from s
    patches draws attention as if those s patches were still present.
    """
    n, d = h.shape
    dh = d // heads
    q = h @ params.wq
    k = h @ params.wk
    v = h @ params.wv
    qh = q.reshape(n, heads, dh).transpose(1, 0, 2)
    kh = k.reshape(n, heads, dh).transpose(1, 0, 2)
    vh = v.reshape(n, heads, dh).transpose(1, 0, 2)
    logits = (qh @ kh.transpose(0, 2, 1)) / np.float32(math.sqrt(dh))
    weights = row_softmax_with_bias(logits.reshape(heads * n, n), np.log(sizes))
    ctx = weights.reshape(heads, n, n) @ vh
    out = ctx.transpose(1, 0, 2).reshape(n, d) @ params.wo
    return out, k


def head_mean_keys(k: np.ndarray, heads: int) -> np.ndarray:
    """Key features averaged across heads; the visual-similarity metric."""
    n, d = k.shape
    return k.reshape(n, heads, d // heads).mean(axis=1, dtype=np.float64).astype(np.float32)


def encoder_layer_forward(
    state: TokenState,
    params: EncoderLayerParams,
    alpha: float,
    r: int,
    *,
    heads: int,
    protected: frozenset[int] = frozenset(),
    merge_hook=None,
) -> tuple[TokenState, list[tuple[int, ...]]]:
    """One layer: attention, then the merge block, then the MLP.

    Returns the new state and the merged pair groups (in original-patch
    lineage terms) for trace recording. With r = 0 this is a plain
    transformer layer with proportional attention.
    """
    x = state.features
    attn, k = multi_head_attention(
        layer_norm(x, params.ln1_gain, params.ln1_bias), params, heads, state.sizes
    )
    state = with_features(state, x + attn)

    groups: list[tuple[int, ...]] = []
    if r > 0:
        a_idx, b_idx = bipartite_partition(state.num_tokens, protected)
        scores = score_tokens(head_mean_keys(k, heads), a_idx, b_idx)
        if alpha < 1.0:
            if state.spatial is None:
                raise MissingSpatialTokensError(
                    f"alpha={alpha} requires spatial tokens but none are present"
                )
            scores = fused_score(
                scores, spatial_score_tokens(state.spatial, a_idx, b_idx), alpha
            )
        pairs = bsm_select(scores, r)
        groups = merged_pair_groups(state, pairs)
        before = state
        state = apply_merge(state, pairs)
        if merge_hook is not None:
            merge_hook(before, state)

    x = state.features
    mlp = gelu(layer_norm(x, params.ln2_gain, params.ln2_bias) @ params.w1) @ params.w2
    return with_features(state, x + mlp), groups


def _needs_spatial(schedule: MergeSchedule) -> bool:
    return any(
        r > 0 and alpha_at(schedule, i) < 1.0
        for i, r in enumerate(schedule.r_per_layer)
    )


def vit_forward(
    tokens: np.ndarray,
    depth: DepthMap | None,
    config: EncoderConfig,
    schedule: MergeSchedule,
    *,
    params: list[EncoderLayerParams] | None = None,
    spatial_dim: int = DEFAULT_TOKEN_DIM,
    levels: int = DEFAULT_LEVELS,
    merge_hook=None,
) -> tuple[TokenState, MergeTrace]:
    """Run all layers, threading the token state and recording the trace.

    Spatial tokens are built once from the depth map, but only when some
    merging layer actually weights them (alpha < 1); a visual-only run
    never touches the spatial path. ``merge_hook(layer, before, after)``
    observes each layer's merge for instrumentation.
    """
    grid = config.grid
    if schedule.layers != config.layers:
        raise ShapeMismatchError(
            f"schedule has {schedule.layers} layers, encoder {config.layers}"
        )
    n0 = grid.num_patches

    z_levels = None
    spatial = None
    if depth is not None:
        z_levels = quantize_depth_levels(patch_mean_depth(depth, grid), levels)
    if _needs_spatial(schedule):
        if z_levels is None:
            raise MissingSpatialTokensError(
                f"schedule {schedule.kind!r} needs a depth map"
            )
        spatial = tokens_from_triplets(grid_triplets(grid, z_levels), spatial_dim)

    state = TokenState.initial(tokens, grid, z_levels, spatial)
    if params is None:
        params = init_encoder(config)

    trace = MergeTrace(grid_w=grid.grid_w, grid_h=grid.grid_h)
    expected = n0
    for i in range(config.layers):
        alpha = alpha_at(schedule, i)
        r = schedule.r_per_layer[i]
        hook = None
        if merge_hook is not None:
            hook = lambda before, after, _i=i: merge_hook(_i, before, after)
        state, groups = encoder_layer_forward(
            state, params[i], alpha, r,
            heads=config.heads, protected=config.protected, merge_hook=hook,
        )
        expected -= r
        assert state.num_tokens == expected
        assert state.features.shape == (expected, config.model_dim)
        record_layer(trace, i, alpha, r, groups)

    finalize(trace, state.lineage)
    return state, trace
