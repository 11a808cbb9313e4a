"""Shared exception taxonomy.

Callers that violate a documented precondition get a subclass of
VolumizeError; nothing in the package raises bare ValueError for contract
violations, so CLI exit-code mapping stays mechanical.
"""


class VolumizeError(Exception):
    """Base class for all package errors."""


class ShapeError(VolumizeError):
    """Operand dimensions do not line up."""


class DomainError(VolumizeError):
    """A numeric argument lies outside its mathematical domain."""


class ConfigError(VolumizeError):
    """A config value, key, or combination is invalid."""


class NumericError(VolumizeError):
    """A computation produced or received non-finite values, or diverged."""


class CheckpointError(VolumizeError):
    """A checkpoint or packed-model file is unusable.

    The message starts with 'version:' or 'integrity:' so callers can tell
    a format-version mismatch from a corrupted payload.
    """
