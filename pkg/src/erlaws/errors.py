"""Exception hierarchy shared across the package."""


class ErlawsError(Exception):
    """Base class for all package errors."""


class ValidationError(ErlawsError, ValueError):
    """Input object violates its invariants (bad distribution, bad point, ...)."""


class ConstructionError(ErlawsError, ValueError):
    """A tower (or other structure) cannot be built with the given parameters."""


class DomainError(ErlawsError, ValueError):
    """A level or parameter lies outside the domain where a quantity exists."""


class ScheduleError(ErlawsError, ValueError):
    """Window schedule gives an infeasible length for the requested n."""


class EstimationError(ErlawsError, RuntimeError):
    """Monte Carlo estimate cannot be formed from the collected samples."""


class ConfigError(ErlawsError, ValueError):
    """Experiment configuration is invalid; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
