"""Exception hierarchy shared by every module.

The CLI maps these onto its exit codes: configuration problems exit 2,
data/compatibility problems exit 3, numerical failures exit 4.
"""


class TssegError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TssegError, ValueError):
    """Invalid configuration or hyperparameter combination."""


class ShapeError(TssegError, ValueError):
    """Array dimensions do not agree."""


class AnnotationError(TssegError, ValueError):
    """Timestamp or label annotations are missing or malformed."""


class FormatError(TssegError, ValueError):
    """A file does not parse. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class DataError(TssegError, ValueError):
    """Dataset files are missing or mutually inconsistent."""


class NumericalError(TssegError, ArithmeticError):
    """A loss or parameter became non-finite during training."""
