"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A declarative input (problem, term, mode list, config) is invalid.

    Carries the complete list of violations in ``errors`` so callers can
    report everything at once.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class TensorIOError(IOError):
    """A tensor file could not be read or written (bad magic, truncation,
    header/payload mismatch)."""


class ConvergenceError(RuntimeError):
    """An iterative solve produced non-finite values or an inner solver
    failed to reach its tolerance within its iteration cap."""

    def __init__(self, message, iteration=None, residual=None):
        self.iteration = iteration
        self.residual = residual
        super().__init__(message)
