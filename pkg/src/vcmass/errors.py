"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    pass


class UnsupportedConfigurationError(ValueError):
    pass


class MeshFormatError(ValueError):
    """Raised when a mesh document cannot be parsed or fails validation.

    ``line`` is the 1-based line number of the offending record, if known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptySystemError(ValueError):
    pass


class DefinitenessError(ArithmeticError):
    """Cholesky factorisation hit a non-positive pivot."""

    def __init__(self, pivot):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite (failed at pivot {pivot})")


class LoadEvaluationError(RuntimeError):
    pass


class InstabilityError(RuntimeError):
    """Time integration diverged; ``step`` is the index of the first bad step."""

    def __init__(self, step, message="solution blew up"):
        self.step = step
        super().__init__(f"{message} at step {step}")
