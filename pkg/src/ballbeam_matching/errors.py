"""Exception types raised across the toolkit."""


class LinkageDomainError(ValueError):
    """The beam linkage is singular (|rho * sin(theta)| >= 1)."""


class SingularityError(ArithmeticError):
    """A metric or closed-loop quantity is not invertible at the requested point."""


class GeneratorError(ValueError):
    """A generator or plant invariant is violated."""


class NonEquilibriumError(ValueError):
    """The requested linearization point is not an equilibrium of the law."""


class FitError(RuntimeError):
    """Gain fitting failed; ``residual`` holds the last gain error norm."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class ConfigError(ValueError):
    """Invalid run configuration (carries a field path and line when known)."""
