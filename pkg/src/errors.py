"""Exception hierarchy for the cell-process toolkit.

Every error carries the exit code the command line reports for it:
0 success, 1 configuration, 2 assumption failure, 3 numerical failure,
4 acceptance-threshold failure.
"""

from typing import List, Optional


class CellProcessError(Exception):
    """Base class for all toolkit errors."""

    exit_code: int = 3


class ConfigError(CellProcessError):
    """Malformed or incomplete run configuration."""

    exit_code = 1

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")
        self.field = field
        self.line = line


class DomainError(CellProcessError, ValueError):
    """An argument lies outside the domain of an operation."""


class ModelValidationError(CellProcessError):
    """A standing assumption on the rates or the kernel does not hold."""

    exit_code = 2


class DegenerateKernelError(ModelValidationError):
    """The kernel puts all its mass at 1: the cell never truly divides."""


class NotPositiveRecurrentError(ModelValidationError):
    """A stationary computation was requested for a model that is not positive recurrent."""

    def __init__(self, condition: str, message: Optional[str] = None):
        super().__init__(message or f"model is not positive recurrent: {condition} fails")
        self.condition = condition


class ModelInconsistencyError(CellProcessError):
    """The simulated dynamics contradict the balance assumption (no jump, overflow)."""

    exit_code = 2


class DivergentIntegralError(CellProcessError):
    """A kernel integral needed by the generator is infinite."""

    def __init__(self, moment: str, message: Optional[str] = None):
        super().__init__(message or f"kernel integral diverges: {moment} = +inf")
        self.moment = moment


class FlowExplosionError(CellProcessError):
    """The growth flow reaches +inf before the requested time."""

    def __init__(self, explosion_time: float, requested: Optional[float] = None):
        detail = f" (requested t={requested:.6g})" if requested is not None else ""
        super().__init__(f"flow explodes at t={explosion_time:.6g}{detail}")
        self.explosion_time = explosion_time
        self.requested = requested


class TailWindowError(CellProcessError):
    """Not enough samples (or no acceptable fit) in a tail window."""


class CFLViolationError(CellProcessError):
    """Explicit PDE step larger than the stability bound."""

    def __init__(self, dt: float, max_dt: float):
        super().__init__(f"time step {dt:.6g} violates the CFL bound; max stable dt is {max_dt:.6g}")
        self.dt = dt
        self.max_dt = max_dt


class ConvergenceError(CellProcessError):
    """Time marching did not reach the steady-state tolerance."""

    def __init__(self, message: str, residual_history: Optional[List[float]] = None):
        super().__init__(message)
        self.residual_history = residual_history or []


class AcceptanceError(CellProcessError):
    """A cross-validation distance exceeds its configured bound."""

    exit_code = 4
