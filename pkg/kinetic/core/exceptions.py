from typing import Optional

from kinetic.core import status


class KineticError(Exception):
    """Base error carrying the exit status the command line reports."""

    status_code: int = status.EXIT_RUNTIME_ERROR

    def __init__(self, detail: str, status_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if status_code is not None:
            self.status_code = status_code

    def __str__(self) -> str:
        return self.detail


class ConfigurationError(KineticError, ValueError):
    status_code = status.EXIT_VALIDATION_ERROR

    def __init__(
        self, detail: str, key: Optional[str] = None, line: Optional[int] = None
    ):
        super().__init__(detail)
        self.key = key
        self.line = line


class ModelError(KineticError, ValueError):
    """Kernels or tables that violate positivity or normalization."""

    status_code = status.EXIT_VALIDATION_ERROR


class UsageError(KineticError, ValueError):
    status_code = status.EXIT_VALIDATION_ERROR


class SimulationError(KineticError):
    status_code = status.EXIT_RUNTIME_ERROR


class UndefinedMomentError(SimulationError):
    """Raised when an activation is requested for an empty subsystem."""
