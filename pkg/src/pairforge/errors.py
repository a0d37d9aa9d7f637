"""Exception types shared across the package."""


class PairforgeError(Exception):
    """Base class for all package errors."""


class DomainError(PairforgeError, ValueError):
    """A function was evaluated outside the range where it is sampled."""


class StreamOrderError(PairforgeError, ValueError):
    """A time-tag stream is not nondecreasing in time."""


class ConfigError(PairforgeError, ValueError):
    """Invalid or inconsistent configuration."""


class InsufficientDataError(PairforgeError, ZeroDivisionError):
    """An estimator would divide by a zero count."""


class NegativeRateError(PairforgeError, ValueError):
    """Dark-count subtraction produced a negative rate."""


class FitError(PairforgeError, RuntimeError):
    """The SHG fit did not converge. ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateFitError(FitError):
    """The data cannot constrain both model parameters."""
