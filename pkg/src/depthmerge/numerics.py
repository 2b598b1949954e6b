"""Dense kernels shared by the merging pipeline.

Conventions used throughout the package:

* matrices are 2-D float32 numpy arrays, row-major, finite everywhere;
* dot products and averages accumulate in float64 and are stored back as
  float32, keeping the conservation checks tight at encoder precision;
* all functions are pure and thread-safe.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DegenerateVectorError,
    InvalidDimensionError,
    InvalidSizeError,
    NonFiniteError,
    ShapeMismatchError,
)

ENCODING_BASE = 10000.0


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a finite 2-D float32 array."""
    m = np.asarray(values, dtype=np.float32)
    if m.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return m


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Validate and convert to a finite 1-D float32 array."""
    v = np.asarray(values, dtype=np.float32)
    if v.ndim != 1:
        raise ShapeMismatchError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return v


def cosine_similarity_matrix(a, b) -> np.ndarray:
    """Pairwise cosine similarity between the rows of two matrices.

    Entry (i, j) is dot(a_i, b_j) / (|a_i| |b_j|), accumulated in float64.
    A zero-norm row is reported, never patched with an epsilon: a zero
    feature row indicates upstream corruption.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatchError(
            f"A has {a.shape[1]} columns but B has {b.shape[1]}"
        )
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    a_norm = np.sqrt(np.einsum("ij,ij->i", a64, a64))
    b_norm = np.sqrt(np.einsum("ij,ij->i", b64, b64))
    for which, norms in (("A", a_norm), ("B", b_norm)):
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise DegenerateVectorError(which, int(zero[0]))
    # normalizing the (small) product matrix beats normalizing both inputs
    sims = a64 @ b64.T
    sims /= a_norm[:, None]
    sims /= b_norm[None, :]
    return sims.astype(np.float32)


def sinusoidal_encoding(index: int, dim: int) -> np.ndarray:
    """Classic interleaved sin/cos positional code for a single index.

    Component 2k is sin(index / base^(2k/dim)) and component 2k+1 the
    matching cosine, so every frequency pair contributes unit norm.
    """
    if dim < 2 or dim % 2 != 0:
        raise InvalidDimensionError(f"encoding dim must be even and >= 2, got {dim}")
    if index < 0:
        raise InvalidDimensionError(f"encoding index must be >= 0, got {index}")
    k = np.arange(dim // 2, dtype=np.float64)
    angles = float(index) / ENCODING_BASE ** (2.0 * k / dim)
    out = np.empty(dim, dtype=np.float32)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def row_softmax_with_bias(logits, bias) -> np.ndarray:
    """Row-wise softmax of ``logits + bias`` with the bias broadcast per column.

    Max subtraction guards against overflow; each row is normalized with a
    float64 sum so the stored float32 rows sum to 1 within 1e-6.
    """
    logits = as_matrix(logits, "logits")
    bias = as_vector(bias, "bias")
    if bias.shape[0] != logits.shape[1]:
        raise ShapeMismatchError(
            f"bias length {bias.shape[0]} != logit columns {logits.shape[1]}"
        )
    z = logits + bias[None, :]
    z -= z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    total = z.sum(axis=1, dtype=np.float64, keepdims=True)
    z *= (1.0 / total).astype(np.float32)
    return z


def weighted_row_average(
    f_a, s_a: float, f_b, s_b: float
) -> tuple[np.ndarray, float]:
    """Size-weighted average of two feature rows; returns (features, size).

    Conserves the size-weighted feature sum: s_out * f_out equals
    s_a * f_a + s_b * f_b up to one rounding ulp per component.
    """
    if not (s_a > 0 and s_b > 0):
        raise InvalidSizeError(f"token sizes must be positive, got {s_a}, {s_b}")
    f_a = as_vector(f_a, "f_a")
    f_b = as_vector(f_b, "f_b")
    if f_a.shape != f_b.shape:
        raise ShapeMismatchError(f"feature dims differ: {f_a.shape} vs {f_b.shape}")
    s_a64 = float(s_a)
    s_b64 = float(s_b)
    total = s_a64 + s_b64
    merged = (s_a64 * f_a.astype(np.float64) + s_b64 * f_b.astype(np.float64)) / total
    return merged.astype(np.float32), float(np.float32(total))
