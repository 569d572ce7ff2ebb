"""Exception types shared across the package."""


class GridPrivError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GridPrivError):
    """Inconsistent dimensions, invalid parameters or unsupported combinations."""


class InfeasibilityError(GridPrivError):
    """A linear system or design condition has no admissible solution."""


class DivergenceError(GridPrivError):
    """The integrator produced a non-finite state."""

    def __init__(self, time, message=None):
        self.time = time
        super().__init__(message or f"non-finite state at t={time:.6g} s")
