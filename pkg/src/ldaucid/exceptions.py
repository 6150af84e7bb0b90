"""Exception types raised across the package."""


class LdaucidError(Exception):
    """Base class for all package errors."""


class ShapeError(LdaucidError, ValueError):
    """Array dimensions do not match what an operation requires."""


class ValidationError(LdaucidError, ValueError):
    """An argument is outside its documented domain."""


class PseudoSetEmptyError(LdaucidError, RuntimeError):
    """No GMM sample passed the confidence threshold."""


class ParseError(LdaucidError, ValueError):
    """A binary input file is malformed.

    ``offset`` is the byte position where parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ConfigError(LdaucidError, ValueError):
    """An experiment config file has an unknown key or bad value."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        suffix = f" [{', '.join(where)}]" if where else ""
        super().__init__(message + suffix)
        self.key = key
        self.line = line
