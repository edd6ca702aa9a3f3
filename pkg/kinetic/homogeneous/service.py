import logging
from typing import Optional

import numpy as np
from tqdm import tqdm

from kinetic.activity.model import HomogeneousState, MomentSet
from kinetic.activity.service import ActivityService
from kinetic.config import settings
from kinetic.core.exceptions import (
    ModelError,
    SimulationError,
    UndefinedMomentError,
    UsageError,
)
from kinetic.homogeneous.model import InteractionModel, evaluate_rate, evaluate_transition
from kinetic.utils.integrator import IntegratorDiagnostics, march_plan, rk4_advance

# Configure logger
logger = logging.getLogger(__name__)


class HomogeneousService:

    @staticmethod
    def gain_loss_micro(state: HomogeneousState, model: InteractionModel, i: int) -> np.ndarray:
        """Net micro-micro flux into subsystem i at every node."""
        _check_state(state, model, i)
        return _micro(state.values, model)[i]

    @staticmethod
    def gain_loss_macro(state: HomogeneousState, model: InteractionModel, i: int) -> np.ndarray:
        _check_state(state, model, i)
        return _macro(state.values, model)[i]

    @staticmethod
    def prolif_destr(state: HomogeneousState, model: InteractionModel, i: int) -> np.ndarray:
        _check_state(state, model, i)
        return _prolif(state.values, model)[i]

    @staticmethod
    def rhs(state: HomogeneousState, model: InteractionModel) -> np.ndarray:
        _check_state(state, model)
        return _rhs(state.t, state.values, model)

    @staticmethod
    def step_rk4(
        state: HomogeneousState,
        model: InteractionModel,
        dt: float,
        diagnostics: Optional[IntegratorDiagnostics] = None,
        clamp: bool = True,
    ) -> HomogeneousState:
        if dt <= 0:
            raise UsageError(f"dt must be positive, got {dt}")
        _check_state(state, model)
        values = _advance(state.t, state.values, model, dt, diagnostics, clamp)
        return HomogeneousState(t=state.t + dt, values=values, grid=state.grid)

    @staticmethod
    def run_until(
        state: HomogeneousState,
        model: InteractionModel,
        t_end: float,
        dt: float,
        output_interval: Optional[float] = None,
        diagnostics: Optional[IntegratorDiagnostics] = None,
    ) -> list[MomentSet]:
        """Moments after every output interval; the initial state is not sampled."""
        _, trajectory = HomogeneousService.integrate(
            state, model, t_end, dt, output_interval, diagnostics
        )
        return trajectory

    @staticmethod
    def integrate(
        state: HomogeneousState,
        model: InteractionModel,
        t_end: float,
        dt: float,
        output_interval: Optional[float] = None,
        diagnostics: Optional[IntegratorDiagnostics] = None,
        clamp: bool = True,
    ) -> tuple[HomogeneousState, list[MomentSet]]:
        if dt <= 0:
            raise UsageError(f"dt must be positive, got {dt}")
        if t_end <= state.t:
            raise UsageError(f"t_end = {t_end} must be after the state time {state.t}")
        _check_state(state, model)

        steps, every = march_plan(t_end - state.t, dt, output_interval)
        logger.debug(f"Integrating {steps} steps of dt={dt}, sampling every {every}")

        values = np.array(state.values)
        t0 = state.t
        t = t0
        trajectory = []
        for step in tqdm(range(steps), disable=not settings.SHOW_PROGRESS, desc="homogeneous"):
            values = _advance(t, values, model, dt, diagnostics, clamp)
            t = t0 + (step + 1) * dt
            if (step + 1) % every == 0 or step + 1 == steps:
                trajectory.append(ActivityService.moments_of(t, values, state.grid))

        return HomogeneousState(t=t, values=values, grid=state.grid), trajectory


def _check_state(state: HomogeneousState, model: InteractionModel, i: Optional[int] = None) -> None:
    if state.values.shape != (model.n, model.grid.size):
        raise UsageError(
            f"state shape {state.values.shape} does not match model ({model.n}, {model.grid.size})"
        )
    if i is not None and not 0 <= i < model.n:
        raise UsageError(f"subsystem index {i} out of range for {model.n} subsystems")


def _micro(f: np.ndarray, model: InteractionModel) -> np.ndarray:
    F = f * model.grid.weights
    loss = f * np.einsum("ikjb,kb->ij", model.eta, F)
    gain = np.zeros_like(f)
    for (h, k), tables in model.transitions.items():
        pair = model.eta[h, k] * np.outer(F[h], F[k])
        for i, table in tables.items():
            gain[i] += np.tensordot(pair, table, axes=2)
    for h, k in model.identity_pairs:
        gain[h] += f[h] * (model.eta[h, k] @ F[k])
    return gain - loss


def _activations(f: np.ndarray, model: InteractionModel) -> np.ndarray:
    grid = model.grid
    densities = f @ grid.weights
    firsts = f @ (grid.weights * grid.nodes)
    activations = np.zeros(model.n)
    occupied = densities > 0
    activations[occupied] = firsts[occupied] / densities[occupied]
    if model.bundle.strict_moments:
        needed = {k for _, k in model.bundle.mu}
        empty = [k for k in sorted(needed) if not occupied[k]]
        if empty:
            raise UndefinedMomentError(f"activation of empty subsystem {empty[0]} is undefined")
    return activations


def _macro(f: np.ndarray, model: InteractionModel) -> np.ndarray:
    grid = model.grid
    gain = np.zeros_like(f)
    loss = np.zeros_like(f)
    if not model.has_macro:
        return gain

    E = _activations(f, model)
    F = f * grid.weights
    for (h, k), rate in model.bundle.mu.items():
        e = E[k]
        rates = evaluate_rate(rate, grid.nodes, e)
        loss[h] += f[h] * rates * e

        kernels = {i: kernel for (hh, kk, i), kernel in model.bundle.M.items() if (hh, kk) == (h, k)}
        if not kernels:
            gain[h] += f[h] * rates * e
            continue
        tables = {i: evaluate_transition(kernel, grid.nodes, e, grid) for i, kernel in kernels.items()}
        total = sum(table @ grid.weights for table in tables.values())
        if np.any(total <= 0):
            raise ModelError(f"micro-macro kernel for pair {(h, k)} has no mass at E = {e:g}")
        weight = rates * F[h] * e / total
        for i, table in tables.items():
            gain[i] += weight @ table
    return gain - loss


def _prolif(f: np.ndarray, model: InteractionModel) -> np.ndarray:
    F = f * model.grid.weights
    gain = np.zeros_like(f)
    loss = np.zeros_like(f)
    for (i, k), table in model.proliferation.items():
        pair = model.eta[i, k] * np.outer(F[i], F[k])
        gain[i] += np.tensordot(pair, table, axes=2)
    for (i, k), rates in model.destruction.items():
        loss[i] += f[i] * ((model.eta[i, k] * rates) @ F[k])
    return gain - loss


def _transport(t: float, f: np.ndarray, model: InteractionModel) -> np.ndarray:
    """Conservative upwind form of -d/du(phi_i f_i) with no flux through the ends."""
    grid = model.grid
    out = np.zeros_like(f)
    if not model.bundle.phi:
        return out

    moments = ActivityService.moments_of(t, f, grid)
    for i, phi in model.bundle.phi.items():
        velocity = np.broadcast_to(np.asarray(phi(t, grid.nodes, moments), dtype=float), grid.nodes.shape)
        if not np.all(np.isfinite(velocity)):
            raise SimulationError(f"activity drift of subsystem {i} is not finite at t = {t:g}")
        face = 0.5 * (velocity[:-1] + velocity[1:])
        flux = np.maximum(face, 0) * f[i, :-1] + np.minimum(face, 0) * f[i, 1:]
        divergence = np.zeros(grid.size)
        divergence[:-1] += flux
        divergence[1:] -= flux
        out[i] = -divergence / grid.weights
    return out


def _rhs(t: float, f: np.ndarray, model: InteractionModel) -> np.ndarray:
    total = _micro(f, model)
    if model.has_macro:
        total += _macro(f, model)
    if model.proliferation or model.destruction:
        total += _prolif(f, model)
    if model.bundle.phi:
        total += _transport(t, f, model)
    return total


def _advance(t, f, model, dt, diagnostics, clamp) -> np.ndarray:
    return rk4_advance(
        lambda s, g: _rhs(s, g, model), t, f, dt, model.grid.weights, diagnostics, clamp
    )
