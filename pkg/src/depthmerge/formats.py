"""Bit-exact file formats: feature matrices, depth maps, merge-map SVGs.

Feature files ("TSAF") and raw depth files ("TSAD") are little-endian
binary formats with fixed headers; depth also loads from binary (P5) and
ASCII (P2) PGM, normalized by the declared maxval. PGM 16-bit samples are
big-endian per the PGM standard; everything else is little-endian.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import (
    BadMagicError,
    BadVersionError,
    FileFormatError,
    InvalidTraceError,
    NonFinitePayloadError,
    ShapeMismatchError,
    TruncatedFileError,
)
from .spatial import DepthMap, PatchGrid, minmax_normalize
from .trace import MergeTrace, is_partition

FEATURE_MAGIC = b"TSAF"
FEATURE_VERSION = 1
DEPTH_MAGIC = b"TSAD"

# Fixed 32-color palette cycled by group index; chosen for contrast between
# consecutive indices so adjacent merge groups rarely share a hue.
PALETTE = (
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4",
    "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080", "#e6beff",
    "#9a6324", "#fffac8", "#800000", "#aaffc3", "#808000", "#ffd8b1",
    "#000075", "#808080", "#b2182b", "#2166ac", "#76dd78", "#fdae61",
    "#5e3c99", "#e66101", "#1b7837", "#c51b7d", "#4d9221", "#d6604d",
    "#35978f", "#b35806",
)


def _check_finite_payload(values: np.ndarray, payload_offset: int) -> None:
    bad = np.flatnonzero(~np.isfinite(values.reshape(-1)))
    if bad.size:
        raise NonFinitePayloadError(
            f"payload value {bad[0]} is not finite", payload_offset + 4 * int(bad[0])
        )


def save_feature_file(path, matrix: np.ndarray) -> None:
    """TSAF: magic, u8 version, u32le rows/cols, f32le row-major payload."""
    m = np.ascontiguousarray(matrix, dtype=np.float32)
    if m.ndim != 2:
        raise ShapeMismatchError(f"feature matrix must be 2-D, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFinitePayloadError("refusing to write non-finite features", 13)
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<B", FEATURE_VERSION))
        fh.write(struct.pack("<II", m.shape[0], m.shape[1]))
        fh.write(m.astype("<f4").tobytes())


def load_feature_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 13:
        raise TruncatedFileError(13, len(blob), len(blob))
    if blob[:4] != FEATURE_MAGIC:
        raise BadMagicError(f"expected {FEATURE_MAGIC!r}, found {blob[:4]!r}", 0)
    version = blob[4]
    if version != FEATURE_VERSION:
        raise BadVersionError(f"unsupported feature-file version {version}", 4)
    rows, cols = struct.unpack_from("<II", blob, 5)
    expected = 13 + 4 * rows * cols
    if len(blob) < expected:
        raise TruncatedFileError(expected, len(blob), len(blob))
    if len(blob) > expected:
        raise FileFormatError(f"{len(blob) - expected} trailing bytes", expected)
    values = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=13)
    _check_finite_payload(values, 13)
    return values.reshape(rows, cols).astype(np.float32)


def save_depth_raw(path, values: np.ndarray) -> None:
    """TSAD: magic, u32le width/height, f32le row-major payload."""
    v = np.ascontiguousarray(values, dtype=np.float32)
    if v.ndim != 2:
        raise ShapeMismatchError(f"depth array must be 2-D, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFinitePayloadError("refusing to write non-finite depth", 12)
    h, w = v.shape
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(v.astype("<f4").tobytes())


def load_depth_raw(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise TruncatedFileError(12, len(blob), len(blob))
    if blob[:4] != DEPTH_MAGIC:
        raise BadMagicError(f"expected {DEPTH_MAGIC!r}, found {blob[:4]!r}", 0)
    w, h = struct.unpack_from("<II", blob, 4)
    expected = 12 + 4 * w * h
    if len(blob) < expected:
        raise TruncatedFileError(expected, len(blob), len(blob))
    if len(blob) > expected:
        raise FileFormatError(f"{len(blob) - expected} trailing bytes", expected)
    values = np.frombuffer(blob, dtype="<f4", count=w * h, offset=12)
    _check_finite_payload(values, 12)
    return values.reshape(h, w).astype(np.float32)


def _parse_pgm_header(blob: bytes):
    """Return (kind, width, height, maxval, data_offset); handles comments."""
    if blob[:2] not in (b"P5", b"P2"):
        raise BadMagicError(f"not a PGM file: {blob[:2]!r}", 0)
    kind = blob[:2].decode()
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        token = blob[start:pos]
        if not token:
            raise TruncatedFileError(pos + 1, len(blob), len(blob))
        if not token.isdigit():
            raise FileFormatError(f"bad header token {token!r}", start)
        fields.append(int(token))
    width, height, maxval = fields
    if not 0 < maxval < 65536:
        raise FileFormatError(f"maxval {maxval} outside 1..65535", pos)
    pos += 1  # single whitespace byte after maxval
    return kind, width, height, maxval, pos


def load_pgm(path) -> tuple[np.ndarray, int]:
    """Read P5 (8/16-bit) or P2 PGM; returns (values in [0, 1], maxval)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    kind, width, height, maxval, pos = _parse_pgm_header(blob)
    count = width * height
    if kind == "P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        expected = pos + count * dtype.itemsize
        if len(blob) < expected:
            raise TruncatedFileError(expected, len(blob), len(blob))
        samples = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
    else:
        tokens = blob[pos:].split()
        if len(tokens) < count:
            raise TruncatedFileError(count, len(tokens), len(blob))
        try:
            samples = np.array([int(t) for t in tokens[:count]], dtype=np.int64)
        except ValueError as exc:
            raise FileFormatError(f"bad ASCII sample: {exc}", pos) from exc
    if (samples > maxval).any():
        bad = int(np.flatnonzero(samples > maxval)[0])
        raise FileFormatError(f"sample {bad} exceeds maxval {maxval}", pos)
    values = (samples.astype(np.float32) / np.float32(maxval)).reshape(height, width)
    return values, maxval


def save_pgm(path, values: np.ndarray, maxval: int = 255, ascii_format: bool = False) -> None:
    """Write values in [0, 1] as PGM, quantized to round(v * maxval)."""
    v = np.asarray(values, dtype=np.float32)
    if v.ndim != 2:
        raise ShapeMismatchError(f"depth array must be 2-D, got {v.shape}")
    if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
        raise FileFormatError("PGM values must lie within [0, 1]", 0)
    if not 0 < maxval < 65536:
        raise FileFormatError(f"maxval {maxval} outside 1..65535", 0)
    h, w = v.shape
    samples = np.rint(v.astype(np.float64) * maxval).astype(np.uint32)
    header = f"{'P2' if ascii_format else 'P5'}\n{w} {h}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if ascii_format:
            body = "\n".join(" ".join(str(x) for x in row) for row in samples)
            fh.write(body.encode("ascii") + b"\n")
        elif maxval > 255:
            fh.write(samples.astype(">u2").tobytes())
        else:
            fh.write(samples.astype("u1").tobytes())


def read_depth_file(path) -> np.ndarray:
    """Raw depth values from PGM or TSAD, sniffed by magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic[:4] == DEPTH_MAGIC:
        return load_depth_raw(path)
    if magic[:2] in (b"P5", b"P2"):
        values, _ = load_pgm(path)
        return values
    raise BadMagicError(f"unrecognized depth format: {magic!r}", 0)


def load_depth_map(path) -> DepthMap:
    """Depth map ready for the pipeline: file values min-max normalized."""
    return DepthMap(minmax_normalize(read_depth_file(path)))


def render_merge_map(trace: MergeTrace, grid: PatchGrid, retained: int, cell: int = 20) -> str:
    """SVG merge map: one square per patch, one fill per group, boundary edges.

    Group index (hence color) follows the canonical final-group order, so
    the same trace always renders to identical bytes.
    """
    if grid.grid_w != trace.grid_w or grid.grid_h != trace.grid_h:
        raise InvalidTraceError(
            f"trace grid {trace.grid_w}x{trace.grid_h} != {grid.grid_w}x{grid.grid_h}"
        )
    if not is_partition(trace.final_groups, trace.num_patches):
        raise InvalidTraceError("trace final groups do not partition the grid")
    if retained != len(trace.final_groups):
        raise InvalidTraceError(
            f"expected {retained} retained groups, trace has {len(trace.final_groups)}"
        )
    w, h = trace.grid_w, trace.grid_h
    group_of = np.empty(w * h, dtype=np.int64)
    for g, members in enumerate(trace.final_groups):
        for patch in members:
            group_of[patch] = g

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * cell}" height="{h * cell}" '
        f'viewBox="0 0 {w * cell} {h * cell}">',
        f"<!-- {len(trace.final_groups)} merge groups on a {w}x{h} patch grid -->",
    ]
    for patch in range(w * h):
        x, y = patch % w, patch // w
        fill = PALETTE[group_of[patch] % len(PALETTE)]
        lines.append(
            f'<rect x="{x * cell}" y="{y * cell}" width="{cell}" height="{cell}" '
            f'fill="{fill}"/>'
        )
    edges = []
    for patch in range(w * h):
        x, y = patch % w, patch // w
        if x + 1 < w and group_of[patch] != group_of[patch + 1]:
            px = (x + 1) * cell
            edges.append(f'<line x1="{px}" y1="{y * cell}" x2="{px}" y2="{(y + 1) * cell}"/>')
        if y + 1 < h and group_of[patch] != group_of[patch + w]:
            py = (y + 1) * cell
            edges.append(f'<line x1="{x * cell}" y1="{py}" x2="{(x + 1) * cell}" y2="{py}"/>')
    lines.append('<g stroke="#000000" stroke-width="2">')
    lines.extend(edges)
    lines.append(
        f'<rect x="0" y="0" width="{w * cell}" height="{h * cell}" fill="none"/>'
    )
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
