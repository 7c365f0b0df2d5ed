"""Exception hierarchy shared by all modules."""


class EvrpnError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(EvrpnError, ValueError):
    """A value violates a domain invariant (geometry, polarity, ordering)."""


class OrderingError(ValidationError):
    """Messages or events are not in the required order."""


class ConfigError(EvrpnError, ValueError):
    """A configuration object (scene, chunking, clustering ...) is invalid."""


class ParseError(EvrpnError, ValueError):
    """Malformed text input. ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(EvrpnError, ValueError):
    """Malformed binary input. ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"byte offset {offset}: {message}")


class BadMagicError(FormatError):
    pass


class TruncatedHeaderError(FormatError):
    pass


class TruncatedBlockError(FormatError):
    """The 4-byte event count of a message block is cut short."""


class TruncatedRecordError(FormatError):
    """A message block ends in the middle of an event record."""
