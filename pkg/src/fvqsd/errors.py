"""Exception types shared across the package."""


class ModelDefinitionError(ValueError):
    """A model callback returned something structurally invalid (negative
    rate, non-finite value, state outside the state space, ...)."""


class SimulationError(RuntimeError):
    """A simulation step produced a non-finite state; carries the offending
    state in ``args`` so step-size / model problems can be diagnosed."""


class ConvergenceError(RuntimeError):
    """An iterative solve did not converge within its iteration budget."""

    def __init__(self, message: str, last_iterate=None, residual: float | None = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class ConditioningDegenerateError(RuntimeError):
    """Conditioning on survival is numerically meaningless: the surviving
    mass underflowed (oracle) or no replica survived (Monte Carlo)."""


class ConfigError(ValueError):
    """A configuration document failed validation."""
