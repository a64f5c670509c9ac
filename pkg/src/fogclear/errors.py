"""Exception types shared across the package.

The CLI maps ``ValueError`` subclasses to exit code 1 and ``FormatError`` /
``OSError`` to exit code 2.
"""


class InvalidArgument(ValueError):
    """Bad shape, range or configuration handed to an operation."""


class FrameError(ValueError):
    """A frame or unit violates the game-state invariants."""

    def __init__(self, message, *, unit_index=None, field=None, line=None):
        self.unit_index = unit_index
        self.field = field
        self.line = line
        super().__init__(message)


class ParseError(ValueError):
    """A frame-log line could not be parsed."""

    def __init__(self, message, *, line, field=None):
        self.line = line
        self.field = field
        super().__init__(f"line {line}: {message}")


class FormatError(Exception):
    """Binary file has bad magic, version, checksum or is truncated."""

    def __init__(self, message, *, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class TrainingError(RuntimeError):
    """Training produced a non-finite loss or was given no data."""
