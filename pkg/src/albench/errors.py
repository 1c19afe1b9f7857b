"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: ValidationError -> 1,
FormatError / CorruptionError / OSError -> 2.
"""


class ValidationError(ValueError):
    """Bad arguments, violated preconditions, or inconsistent domain data."""


class FormatError(Exception):
    """A file does not conform to an expected binary format (magic/version)."""


class CorruptionError(FormatError):
    """A file has a valid header but a truncated or oversized payload."""
