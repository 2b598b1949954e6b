"""Exception hierarchy shared by all depthmerge modules."""


class DepthMergeError(Exception):
    """Base class for every error raised by this package."""


class NonFiniteError(DepthMergeError):
    """A matrix or vector contains NaN or Inf."""


class ShapeMismatchError(DepthMergeError):
    """Array dimensions disagree with what an operation requires."""


class DegenerateVectorError(DepthMergeError):
    """A row that must be normalized has zero norm."""

    def __init__(self, which: str, row: int):
        self.which = which
        self.row = row
        super().__init__(f"{which} row {row} has zero norm; cannot normalize")


class InvalidDimensionError(DepthMergeError):
    """An encoding dimension does not satisfy its divisibility constraint."""


class InvalidSizeError(DepthMergeError):
    """A token size is outside its allowed range."""


class DepthRangeError(DepthMergeError):
    """A depth value falls outside [0, 1]."""


class IncompatibleScoresError(DepthMergeError):
    """Two score matrices cannot be blended (shape or index-set mismatch)."""


class ReductionTooLargeError(DepthMergeError):
    """Requested merge count exceeds the number of available source tokens."""


class InvalidMergePlanError(DepthMergeError):
    """A merge plan repeats a source token or pairs tokens across sets wrongly."""


class NothingToMergeError(DepthMergeError):
    """Fewer than two tokens; bipartite partitioning is impossible."""


class MissingSpatialTokensError(DepthMergeError):
    """A schedule demands spatial scores but no depth input was provided."""


class ScheduleInfeasibleError(DepthMergeError):
    """A reduction schedule violates the per-layer merge cap."""

    def __init__(self, layer: int, r: int, tokens: int):
        self.layer = layer
        self.r = r
        self.tokens = tokens
        super().__init__(
            f"schedule infeasible at layer {layer}: r={r} exceeds "
            f"floor({tokens}/2)={tokens // 2} mergeable pairs"
        )


class InvalidTraceError(DepthMergeError):
    """A merge trace does not describe a valid partition of the patch grid."""


class FileFormatError(DepthMergeError):
    """Base class for file parsing errors; carries the offending byte offset."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class BadMagicError(FileFormatError):
    """File does not start with the expected magic bytes."""


class BadVersionError(FileFormatError):
    """File declares an unsupported format version."""


class TruncatedFileError(FileFormatError):
    """File ends before the declared payload is complete."""

    def __init__(self, expected: int, actual: int, offset: int):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"truncated file: expected {expected} bytes, found {actual}", offset
        )


class NonFinitePayloadError(FileFormatError):
    """A float payload contains NaN or Inf."""
