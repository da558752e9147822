"""Exception hierarchy shared across the toolkit."""


class KvEditError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(KvEditError):
    """Two operands disagree on a dimension that must match."""

    def __init__(self, what: str, left: int, right: int):
        super().__init__(f"{what}: {left} != {right}")
        self.left = left
        self.right = right


class SingularMatrixError(KvEditError):
    """A coefficient matrix that must be invertible is rank-deficient."""

    def __init__(self, context: str, rank: int, size: int):
        super().__init__(
            f"{context}: matrix is singular (rank {rank} of {size}, defect {size - rank})"
        )
        self.rank = rank
        self.size = size


class LayerAlignmentError(KvEditError):
    """Two layer sets that must be aligned differ."""


class ConditioningWarning(UserWarning):
    """Coefficient matrix is ill-conditioned; results may lose precision."""


class TensorFileError(KvEditError):
    """Base class for tensor-file parse/write problems."""


class TruncatedFileError(TensorFileError):
    """File ends before the declared header or payload does."""


class MalformedHeaderError(TensorFileError):
    """Header is not valid JSON or violates the layout rules."""


class OffsetRangeError(TensorFileError):
    """A tensor's byte range falls outside the payload."""


class UnsupportedDtypeError(TensorFileError):
    """A tensor declares a dtype the toolkit does not handle."""


class SelectionError(KvEditError):
    """A name pattern matched nothing, or matched an unusable tensor."""
