"""Exception types raised across the package."""


class SepDemixError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SepDemixError, ValueError):
    """Problem dimensions or options violate their invariants."""


class ValidationError(SepDemixError, ValueError):
    """An input array fails a structural check (shape, orthonormality, norm)."""


class SolverDivergedError(SepDemixError, ArithmeticError):
    """The factored solver produced a non-finite objective.

    ``diagnostics`` carries the iteration count and last finite values.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class RankDeficientError(SepDemixError, ArithmeticError):
    """A recovered matrix has numerical rank below the requested rank."""


class DegenerateFactorizationError(SepDemixError, ArithmeticError):
    """The reference receiver's signal factor cannot be pseudo-inverted."""


class ReconstructionError(SepDemixError, ArithmeticError):
    """The basis transform is singular, so vectors cannot be reconstructed."""
