"""Exception types raised across the package."""


class AsmdError(Exception):
    """Base class for all package errors."""


class DimensionError(AsmdError, ValueError):
    """Array shapes do not agree with each other or with the setup."""


class InfeasiblePointError(AsmdError, ValueError):
    """A point lies outside the feasible set by more than the tolerance."""


class DomainError(AsmdError, ValueError):
    """A function was evaluated outside its domain (e.g. log of zero)."""


class OracleBoundError(AsmdError, RuntimeError):
    """A drawn stochastic subgradient exceeded the oracle's declared bound."""


class NoProductiveStepsError(AsmdError, RuntimeError):
    """The stopping rule fired before any productive step was taken.

    Carries the partial run statistics so callers can report them.
    """

    def __init__(self, message, *, iterations=0, nonproductive=0, sum_sq=0.0):
        super().__init__(message)
        self.iterations = iterations
        self.nonproductive = nonproductive
        self.sum_sq = sum_sq


class EmptyFeasibleGridError(AsmdError, ValueError):
    """No grid point satisfies the constraints at the requested resolution."""


class TraceThinnedError(AsmdError, ValueError):
    """A per-step audit needs a full trace but received a thinned one."""


class FormatError(AsmdError, ValueError):
    """An instance or result file is malformed."""


class MismatchError(AsmdError, ValueError):
    """A result does not belong to the instance it is audited against."""
