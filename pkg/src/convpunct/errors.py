"""Exception hierarchy shared across the package.

The CLI maps ``DataError`` subclasses to exit code 2 and
``NumericalError`` to exit code 3.
"""

from __future__ import annotations


class ConvpunctError(Exception):
    """Base class for all package errors."""


class DataError(ConvpunctError, ValueError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    """A line of an input file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingLabelError(DataError):
    pass


class CorpusError(DataError):
    pass


class ConfigError(DataError):
    pass


class ShapeError(ConvpunctError, ValueError):
    """Tensor shapes are inconsistent with a layer or a config."""


class NumericalError(ConvpunctError, ArithmeticError):
    """Training produced a non-finite loss or a degenerate batch."""


class CheckpointError(DataError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass
