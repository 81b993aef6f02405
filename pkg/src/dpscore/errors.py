"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A caller-supplied parameter violates a documented precondition."""


class UnsupportedError(InvalidParameterError):
    """The requested combination of options is not supported (e.g. delta = 0 for a Gaussian mechanism)."""


class NumericalFailure(RuntimeError):
    """A numerical routine failed to produce a trustworthy answer."""


class ConvergenceError(NumericalFailure):
    """An iterative solver stopped before reaching its tolerance.

    The final stationarity residual is available as ``residual``.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


class InfeasibleError(NumericalFailure):
    """A linear program had no feasible point."""
