"""Exception hierarchy.

Everything raised on purpose by this package derives from
:class:`VortexLossError`, and the two broad families map onto CLI exit
codes: :class:`DataError` (exit 1) and :class:`ConfigError` (exit 2).
"""


class VortexLossError(Exception):
    """Base class for all package errors."""


class DomainError(VortexLossError, ValueError):
    """An argument lies outside the region where the physics model holds."""


class DataError(VortexLossError, ValueError):
    """Measurement or derived data cannot be reduced as requested."""


class NonphysicalCouplingError(DataError):
    """Loaded Q is not below the coupling Q, so Q0 would be negative or infinite."""


class UndefinedRatioError(DataError):
    """The denominator of a ratio is consistent with zero."""


class IllConditionedError(DataError):
    """Normalization by a quantity no larger than its own uncertainty."""


class NoMatchError(DataError):
    """No (temperature, field) rows could be paired between two datasets."""


class EmptyResultError(DataError):
    """Every candidate point was flagged and excluded."""


class FitError(DataError):
    """The least-squares problem is malformed or cannot be solved."""


class RankDeficiencyError(FitError):
    """Some fit parameters are not identifiable from the data."""

    def __init__(self, message, parameters=()):
        super().__init__(message)
        self.parameters = tuple(parameters)


class ConfigError(VortexLossError, ValueError):
    """A configuration or spec file is malformed."""
