"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``ConfigError`` -> 1, ``DataError`` -> 2,
``InvariantError`` -> 3.
"""


class FlowDetectError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(FlowDetectError, ValueError):
    """Invalid configuration, ratios, rates or degenerate splits."""


class DataError(FlowDetectError):
    """Problems with input data or files on disk."""


class SchemaError(DataError):
    """CSV header does not match the expected column set."""

    def __init__(self, missing, unexpected=()):
        self.missing = list(missing)
        self.unexpected = list(unexpected)
        parts = []
        if self.missing:
            parts.append("missing columns: " + ", ".join(self.missing))
        if self.unexpected:
            parts.append("unexpected columns: " + ", ".join(self.unexpected))
        super().__init__("; ".join(parts) or "schema mismatch")


class SequenceTooShortError(DataError, ValueError):
    """A sequence has fewer time steps than an operation needs."""


class LabelError(DataError, ValueError):
    """A label outside {0, 1}."""


class IntegrityError(DataError):
    """A serialized file failed its checksum or is truncated."""


class IncompatibleVersionError(DataError):
    """A serialized file was written with an unsupported format version."""


class InvariantError(FlowDetectError):
    """Internal contract violated (shape bookkeeping, caches, non-finite values)."""


class DimensionError(InvariantError, ValueError):
    """Operand shapes do not agree."""


class ContractError(InvariantError, ValueError):
    """A backward pass received a cache or gradient it cannot have produced."""


class NonFiniteError(InvariantError, FloatingPointError):
    """An operation produced NaN or Inf."""
