"""Exception hierarchy shared by all modules."""


class BezmpcError(Exception):
    """Base class for package errors."""


class InvalidInputError(BezmpcError, ValueError):
    """Malformed or non-finite input."""


class PreconditionError(BezmpcError, ValueError):
    """Input is well formed but violates an operation's precondition."""


class NumericalError(BezmpcError, ArithmeticError):
    """A factorization or solve became numerically unreliable."""


class RangeError(BezmpcError, ValueError):
    """Evaluation point outside the valid domain."""


class ConfigurationError(BezmpcError, ValueError):
    """A scenario or controller configuration violates a design hypothesis."""


class SingularityError(BezmpcError, ArithmeticError):
    """Input gain too close to zero to invert."""


class PlannerFailure(BezmpcError, RuntimeError):
    """Both the primary and the fallback planning attempts failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StaleSplineError(BezmpcError, RuntimeError):
    """Controller queried outside the interval served by the current plan."""


class InternalError(BezmpcError, RuntimeError):
    """An invariant that theory guarantees was observed to fail."""
