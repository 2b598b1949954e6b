"""Depth-guided token merging for transformer encoders.

The package reduces transformer sequence length layer by layer through
bipartite soft matching, scoring candidate pairs with a blend of visual
feature similarity and depth-derived spatial similarity, and keeps merged
tokens honest in attention through a log-size bias.
"""

from .encoder import (
    EncoderConfig,
    EncoderLayerParams,
    SplitMix64,
    encoder_layer_forward,
    init_encoder,
    vit_forward,
)
from .merge import (
    MergeSchedule,
    ScoreMatrix,
    TokenState,
    alpha_at,
    apply_merge,
    bipartite_partition,
    bsm_select,
    build_schedule,
    fused_score,
    proportional_attention,
)
from .metrics import RunReport, compare_schedules, run_benchmark, spatial_dispersion
from .numerics import (
    cosine_similarity_matrix,
    row_softmax_with_bias,
    sinusoidal_encoding,
    weighted_row_average,
)
from .spatial import (
    DepthMap,
    PatchGrid,
    make_spatial_tokens,
    patch_mean_depth,
    quantize_depth,
)
from .trace import MergeTrace, load_trace, replay, save_trace

__version__ = "0.1.0"

__all__ = [
    "DepthMap",
    "EncoderConfig",
    "EncoderLayerParams",
    "MergeSchedule",
    "MergeTrace",
    "PatchGrid",
    "RunReport",
    "ScoreMatrix",
    "SplitMix64",
    "TokenState",
    "alpha_at",
    "apply_merge",
    "bipartite_partition",
    "bsm_select",
    "build_schedule",
    "compare_schedules",
    "cosine_similarity_matrix",
    "encoder_layer_forward",
    "fused_score",
    "init_encoder",
    "load_trace",
    "make_spatial_tokens",
    "patch_mean_depth",
    "proportional_attention",
    "quantize_depth",
    "replay",
    "row_softmax_with_bias",
    "run_benchmark",
    "save_trace",
    "sinusoidal_encoding",
    "spatial_dispersion",
    "vit_forward",
    "weighted_row_average",
]
