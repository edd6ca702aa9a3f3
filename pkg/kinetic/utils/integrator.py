import logging
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel

from kinetic.core.exceptions import SimulationError, UsageError

# Configure logger
logger = logging.getLogger(__name__)

Rhs = Callable[[float, np.ndarray], np.ndarray]


class IntegratorDiagnostics(BaseModel):
    """Running counters of one integration."""

    steps: int = 0
    clamp_events: int = 0
    clamp_mass: float = 0.0


def march_plan(span: float, dt: float, output_interval: Optional[float]) -> tuple[int, int]:
    """Number of fixed steps covering span, and the sampling stride in steps."""
    if dt <= 0:
        raise UsageError(f"dt must be positive, got {dt}")
    if span <= 0:
        raise UsageError(f"integration span must be positive, got {span}")
    steps = max(1, int(round(span / dt)))
    if abs(steps * dt - span) > 1e-9 * max(1.0, span):
        logger.warning(f"Span {span:g} is not a multiple of dt; marching {steps} steps of {dt:g}")
    every = 1
    if output_interval is not None:
        if output_interval <= 0:
            raise UsageError(f"output_interval must be positive, got {output_interval}")
        every = max(1, int(round(output_interval / dt)))
    return steps, every


def rk4_advance(
    rhs: Rhs,
    t: float,
    f: np.ndarray,
    dt: float,
    weights: np.ndarray,
    diagnostics: Optional[IntegratorDiagnostics] = None,
    clamp: bool = True,
) -> np.ndarray:
    """One classical RK4 step of df/dt = rhs(t, f).

    Negative values left by the stage combination are set to zero when clamp
    is on; the removed mass (quadrature against weights) goes to diagnostics.
    """
    k1 = rhs(t, f)
    k2 = rhs(t + dt / 2, f + dt / 2 * k1)
    k3 = rhs(t + dt / 2, f + dt / 2 * k2)
    k4 = rhs(t + dt, f + dt * k3)
    new = f + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    if not np.all(np.isfinite(new)):
        logger.error(f"Non-finite values after step at t = {t:g}, dt = {dt:g}")
        raise SimulationError(f"non-finite distribution values at t = {t + dt:g}; reduce dt")

    if diagnostics is not None:
        diagnostics.steps += 1
    negative = new < 0
    if np.any(negative):
        if clamp:
            mass = float(-(np.where(negative, new, 0.0) @ weights).sum())
            new = np.where(negative, 0.0, new)
            if diagnostics is not None:
                diagnostics.clamp_events += 1
                diagnostics.clamp_mass += mass
            logger.warning(f"Clamped negative values at t = {t + dt:g} (mass {mass:.3g})")
        elif new.min() < -1e-12:
            raise SimulationError(
                f"negative density {new.min():.3g} at t = {t + dt:g} with clamping disabled"
            )
    return new
