"""Custom exceptions for chainvqa."""

from __future__ import annotations


class ChainVqaError(RuntimeError):
    """Base error for every failure raised by the package."""

    def __init__(self, message: str, *, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class ShapeError(ChainVqaError):
    """Raised when tensor shapes or sequence lengths do not line up."""

    def __init__(self, message: str, *, status_code: int | None = 422):
        super().__init__(message, status_code=status_code)


class NumericError(ChainVqaError):
    """Raised when a forward op produces NaN/+inf or a softmax row is fully masked."""


class TapeError(ChainVqaError):
    """Raised when backward is asked about a tensor the tape never saw."""


class ScheduleError(ChainVqaError):
    """Raised for epochs outside the learning-rate schedule."""


class OptimizerError(ChainVqaError):
    """Raised for invalid optimizer state."""


class GeometryError(ChainVqaError):
    """Raised for degenerate boxes or incompatible embedding widths."""

    def __init__(self, message: str, *, status_code: int | None = 422):
        super().__init__(message, status_code=status_code)


class ParseError(ChainVqaError):
    """Raised when a sub-question cannot be parsed into a known type."""

    def __init__(self, message: str, *, status_code: int | None = 422):
        super().__init__(message, status_code=status_code)


class OracleError(ChainVqaError):
    """Raised when an oracle cannot answer during a dialogue."""


class DatasetError(ChainVqaError):
    """Raised for malformed records, empty vocabularies or empty region sets."""

    def __init__(self, message: str, *, status_code: int | None = 422):
        super().__init__(message, status_code=status_code)


class CheckpointError(ChainVqaError):
    """Raised when a checkpoint cannot be read or does not match the model."""


class ConfigError(ChainVqaError):
    """Raised when configuration values are invalid or unknown."""
