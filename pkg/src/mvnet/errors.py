"""Exception hierarchy shared by every mvnet module.

Each class maps to one process exit code so the CLI can translate failures
for shell scripts: usage errors exit 2, data/format errors exit 3, numeric
errors exit 4.
"""


class MvnetError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class UsageError(MvnetError):
    """Caller misuse: bad flag values, backward on a non-scalar, etc."""

    exit_code = 2


class ConfigError(UsageError):
    """A configuration value violates a documented precondition."""

    exit_code = 2


class DimensionError(UsageError):
    """Array extents are inconsistent with the requested operation."""

    exit_code = 2


class DataError(MvnetError):
    """Input data cannot be used (class too small, empty confusion, ...)."""

    exit_code = 3


class FormatError(DataError):
    """A binary or JSON artifact is malformed; message carries the offset."""

    exit_code = 3


class NumericError(MvnetError):
    """A computation produced NaN/Inf or a series failed to converge."""

    exit_code = 4
