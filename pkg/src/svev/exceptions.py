"""Shared exception types."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class NonConvergenceError(ArithmeticError):
    """A series or iteration hit its term cap before meeting its tolerance."""


class ToleranceError(ArithmeticError):
    """Quadrature could not meet the requested tolerance.

    Carries the best estimate so callers may decide to keep it.
    """

    def __init__(self, message, value, err_est):
        super().__init__(message)
        self.value = value
        self.err_est = err_est


class PrecisionError(RuntimeError):
    """Requested computation needs the extended-precision mode."""


class DegeneracyError(ValueError):
    """Tied singular values where a determinant formula degenerates.

    Perturb the tied values (see ``perturb_degenerate``) or request the
    perturbation path explicitly.
    """


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""


class VerificationFailure(RuntimeError):
    """One or more verification checks failed (CLI exit code 1)."""
