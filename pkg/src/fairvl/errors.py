"""Exception types shared across the package."""


class FairVLError(Exception):
    """Base class for package errors."""


class SchemaError(FairVLError):
    """Attribute schema violated (unknown group, bad probabilities, ...)."""


class ParseError(FairVLError):
    """Malformed dataset file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(FairVLError):
    """Array shape incompatible with the configured dimensions."""


class ConfigError(FairVLError):
    """Invalid run or component configuration."""


class PairingError(FairVLError):
    """Batches passed to a contrastive loss do not refer to the same samples."""


class NumericalError(FairVLError):
    """Non-finite value encountered; names the offending quantity."""
