"""Exception types shared by the solvers."""


class InputError(ValueError):
    """Malformed or inconsistent input (shapes, marginals, parameters)."""


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its budget before meeting its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NumericalError(FloatingPointError):
    """Overflow, underflow or a singular system met during a computation."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ValidationError(ValueError):
    """A stored object failed its invariants when read back."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


class RefusalError(RuntimeError):
    """An operation declined to run because it would exceed a size cap."""
