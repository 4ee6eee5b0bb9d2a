"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid spec, parameters, or config file contents."""


class DomainError(KeyError):
    """Query outside the domain an environment covers."""


class SolverError(RuntimeError):
    """Iterative solver failed to reach tolerance; carries the residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class CapabilityError(ValueError):
    """Requested a closed-form quantity the given spec does not admit."""


class InsufficientDataError(ValueError):
    """Too few samples or sweep points for the requested statistic."""
