"""
Exceptions raised by rispls.

Everything a user can trigger with bad input is a ValueError so that the
command line can report it and exit cleanly.
"""


class DimensionError(ValueError):
    """Shapes or extents that do not line up."""


class DomainError(ValueError):
    """A value outside the domain of an operation (log of zero, etc.)."""


class UsageError(ValueError):
    """An API called in a way it does not support."""


class AttentionError(ValueError):
    """A graph attention operator that cannot be evaluated."""


class ConfigurationError(ValueError):
    """Configuration values that violate an invariant."""


class DatasetFormatError(ValueError):
    """A dataset or checkpoint file that can't be parsed."""


class TrainingError(RuntimeError):
    """Non-finite values encountered while training."""

    def __init__(self, message: str, sample: int | None = None):
        super().__init__(message)
        self.sample = sample
