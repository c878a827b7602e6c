"""Exception hierarchy shared across the package."""


class ComplocError(Exception):
    """Base class for all package errors."""


class DomainMismatchError(ComplocError):
    """Fields, masks or configs live on incompatible grids/domains."""


class ResolutionError(ComplocError):
    """Grid spacing too coarse to resolve the obstacle radius reliably."""


class SingularSystemError(ComplocError):
    """Pure-Neumann problem without a single pinned node."""


class ConvergenceError(ComplocError):
    """Iterative solver hit its iteration cap; carries the final residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InfeasibleError(ComplocError):
    """Limit problem has no density of unit mass under the given g."""


class ConfigError(ComplocError):
    """Run configuration failed validation."""
