"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid model or algorithm parameter."""


class EmptyRequestError(ParameterError):
    """A request for zero variates or an empty sample."""


class EndpointError(ParameterError):
    """The supplied upper endpoint does not dominate the sample."""


class ContractError(ValueError):
    """An input violates a documented precondition (unsorted sample, non-monotone rule)."""


class DecompositionError(ValueError):
    """A correlation matrix cannot be factorized as a valid covariance."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class DivergenceError(ArithmeticError):
    """A quantity that was requested as a number does not converge."""


class ConfigError(ValueError):
    """Malformed or unknown experiment configuration."""
