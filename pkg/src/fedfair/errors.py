"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when a numeric argument violates a precondition (non-finite,
    wrong shape, out of range)."""


class InvalidMatrixError(ValueError):
    """Raised when a matrix argument is not symmetric positive definite."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance within its cap.

    Carries the best iterate and the final residual for diagnosis.
    """

    def __init__(self, message, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class DegenerateSubsetError(ValueError):
    """Raised when a client subset is empty or carries zero decision mass."""


class DegenerateRoundError(ValueError):
    """Raised when a round supplies no usable client signal."""


class DivergenceError(RuntimeError):
    """Local training produced a non-finite loss or parameter."""

    def __init__(self, message, round_index=None, client_id=None):
        super().__init__(message)
        self.round_index = round_index
        self.client_id = client_id


class ConfigError(ValueError):
    """Raised on invalid experiment configuration; names the offending field."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
