"""Exception hierarchy shared by all modules."""


class IsothermicError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(IsothermicError, ValueError):
    """A point, radius or shape lies outside the admissible region."""


class ArgumentError(IsothermicError, ValueError):
    """A malformed argument (wrong shape, non-unit direction, ...)."""


class SingularityError(IsothermicError, ValueError):
    """Evaluation at a genuine singularity (tau at r = 0, flat gradient...)."""


class PoleError(IsothermicError, ValueError):
    """A spherical Moebius map was evaluated at the preimage of infinity."""


class CoverageError(IsothermicError, ValueError):
    """Requested sample points fall outside the region covered by a field."""

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending


class EmptyLevelSetError(IsothermicError, ValueError):
    """A requested inner parallel surface does not exist."""


class ResolutionError(IsothermicError, ValueError):
    """Grid too coarse: empty or disconnected interior."""


class SolverError(IsothermicError, RuntimeError):
    """A linear solve failed to reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StabilityError(IsothermicError, ValueError):
    """An explicit time step violates its stability bound."""


class OracleError(IsothermicError, RuntimeError):
    """The radial reference solver could not produce a trustworthy profile."""


class HypothesisViolation(IsothermicError, ValueError):
    """A curvature hypothesis (lambda_j < tau_k(R)) fails."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class FitDiagnosticError(IsothermicError, ValueError):
    """Asymptotic estimates along an s-ladder behave inconsistently."""


class PreconditionError(IsothermicError, ValueError):
    """Inputs do not satisfy a documented precondition."""


class IncompleteInputError(IsothermicError, ValueError):
    """A report was requested with a missing component."""
