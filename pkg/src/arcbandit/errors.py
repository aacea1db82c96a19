class InvalidArgument(ValueError):
    """Raised for malformed inputs (bad shapes, out-of-range parameters)."""


class NumericError(ArithmeticError):
    """Raised when a linear-algebra step fails after regularisation."""


class ConfigError(ValueError):
    """Raised for invalid experiment configuration documents."""


class ConvergenceError(NumericError):
    """Value iteration stopped at ``max_iters`` without meeting ``tol``."""

    def __init__(self, message, sup_delta):
        super().__init__(message)
        self.sup_delta = sup_delta
