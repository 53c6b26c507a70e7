"""Exception types shared across the package."""
from __future__ import annotations


class SatDiffError(Exception):
    """Base class for all package errors."""


class DomainError(SatDiffError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ShapeError(SatDiffError, ValueError):
    """Two fields (or a field and a kernel) do not live on the same grid."""


class ContractError(SatDiffError, ValueError):
    """A documented precondition of an operation was violated."""


class GeometryError(SatDiffError, ValueError):
    """Cylinders or balls are inconsistent with each other or with the data."""


class StepRejected(SatDiffError):
    """A time step would leave the admissible box [0, rho_max]."""

    def __init__(self, message: str, violation: float):
        super().__init__(message)
        self.violation = violation


class SolverAbort(SatDiffError):
    """Repeated step rejection; the last admissible state is attached."""

    def __init__(self, message: str, state=None, time: float | None = None):
        super().__init__(message)
        self.state = state
        self.time = time


class ConfigError(SatDiffError, ValueError):
    """Invalid manifest entry; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
