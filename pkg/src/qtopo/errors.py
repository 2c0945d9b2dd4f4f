"""Exception hierarchy shared by all qtopo modules."""


class QTopoError(Exception):
    """Base class for every error raised by qtopo."""


class DomainError(QTopoError, ValueError):
    """An argument lies outside the domain of the operation."""


class StructureError(QTopoError, ValueError):
    """A 4x4 matrix does not have quaternion-matrix structure."""


class GapClosedError(QTopoError):
    """The Bloch vector vanishes (or nearly vanishes) somewhere on the grid."""


class DegenerateTripleError(QTopoError):
    """Three unit vectors whose solid angle is undefined (antipodal configuration)."""


class IllConditionedError(QTopoError):
    """Lattice Chern sum too far from an integer to be trusted."""

    def __init__(self, message, value=None, residual=None):
        super().__init__(message)
        self.value = value
        self.residual = residual


class ConsistencyError(QTopoError):
    """An internal numerical identity failed (e.g. a nonzero imaginary residue)."""


class ConfigurationError(QTopoError, ValueError):
    """Inconsistent layer or model configuration (shapes, depths, strides)."""


class NumericalFailureError(QTopoError):
    """NaN/Inf produced during a forward pass or training."""

    def __init__(self, message, layer_index=None):
        super().__init__(message)
        self.layer_index = layer_index


class FormatError(QTopoError):
    """Malformed or truncated binary container."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
