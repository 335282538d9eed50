"""Exception hierarchy shared across the rig."""

from __future__ import annotations


class FprigError(Exception):
    """Base class for all rig errors."""

    code = "error"


class ValidationError(FprigError):
    """A value or document violates its contract.

    ``violations`` lists human-readable ``field: rule`` strings; ``field``
    names the first offending field for quick display.
    """

    code = "validation"

    def __init__(self, message: str, violations: list[str] | None = None):
        self.violations = violations or [message]
        self.field = self.violations[0].split(":", 1)[0] if self.violations else ""
        if violations:
            message = f"{message}: " + "; ".join(violations)
        super().__init__(message)


class ParseError(FprigError):
    """Malformed input bytes; ``offset`` is the byte position when known."""

    code = "parse"

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class NotFoundError(FprigError):
    code = "not_found"


class ConflictError(FprigError):
    code = "conflict"


class OrderingError(FprigError):
    """Timestamp or sequence regression within a stream."""

    code = "ordering"


class ConfigurationError(FprigError):
    code = "configuration"


class ProviderError(FprigError):
    """An analyzer provider could not produce a result."""

    code = "provider"


class TransportError(FprigError):
    """The remote endpoint could not be reached."""

    code = "transport"


class InsufficientDataError(FprigError):
    code = "insufficient_data"
