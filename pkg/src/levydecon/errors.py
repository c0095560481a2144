"""Exception types raised by the estimation pipeline."""


class LevyDeconError(Exception):
    """Base class for all package errors."""


class ConfigError(LevyDeconError, ValueError):
    pass


class NumericalError(LevyDeconError, ArithmeticError):
    """Base class for numerical failures (CLI exit code 3)."""


class BoundaryLeakage(NumericalError, UserWarning):
    """A grid function does not decay at the edges of its log grid.

    Also a ``UserWarning`` so that callers can downgrade it with
    ``warnings.warn`` instead of raising.
    """


class GridMismatch(LevyDeconError, ValueError):
    pass


class UnsupportedKernel(LevyDeconError, ValueError):
    pass


class IntegrabilityViolation(NumericalError):
    pass


class DegenerateBound(NumericalError):
    pass


class QuadratureDivergence(NumericalError):
    pass


class DomainError(LevyDeconError, ValueError):
    pass


class UnboundedKernel(LevyDeconError, ValueError):
    pass


class EmptySpectrum(NumericalError):
    pass


class DegenerateSearch(NumericalError):
    pass
