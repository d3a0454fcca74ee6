"""Exception types shared across the package."""


class BessArbError(Exception):
    """Base class for all package errors."""


class ConfigError(BessArbError):
    """Invalid configuration value or combination."""


class ParseError(BessArbError):
    """A file could not be parsed. Carries the offending location."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc += str(path)
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)


class ValidationError(ParseError):
    """A parsed record violates a domain invariant."""


class DataGapError(BessArbError):
    """A required price or index value is missing."""


class SizeLimitError(BessArbError):
    """An instance exceeds the size limit of an exhaustive method."""


class EngineError(BessArbError):
    """An internal inconsistency in a scenario run (should be unreachable)."""
