import logging
import math
from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from kinetic.activity.model import HomogeneousState, MomentSet
from kinetic.activity.service import ActivityService
from kinetic.config import settings
from kinetic.core.exceptions import UsageError
from kinetic.discrete.model import (
    DiscreteModel,
    DiscreteState,
    identity_macro_transition,
    identity_transition,
)
from kinetic.homogeneous.model import (
    InteractionModel,
    KernelBundle,
    evaluate_rate,
    evaluate_transition,
)
from kinetic.homogeneous.service import HomogeneousService
from kinetic.utils.integrator import IntegratorDiagnostics, march_plan, rk4_advance

# Configure logger
logger = logging.getLogger(__name__)


class DiscreteService:

    @staticmethod
    def discrete_rhs(state: DiscreteState, model: DiscreteModel) -> np.ndarray:
        _check_state(state, model)
        return _discrete_rhs(state.f, model)

    @staticmethod
    def simple_rhs(state: DiscreteState, model: DiscreteModel) -> np.ndarray:
        """Within-subsystem activity transitions only."""
        _check_state(state, model)
        cross = model.A.sum(axis=5)
        kept = np.einsum("pqhkp->pqhk", cross)
        if np.any(cross.sum(axis=4) - kept > settings.DISCRETE_NORMALIZATION_TOLERANCE):
            raise UsageError("simple_rhs needs a model without transitions across subsystems")
        if np.any(model.mu) or np.any(model.P) or np.any(model.D):
            raise UsageError("simple_rhs needs a model without micro-macro, proliferative or destructive terms")

        f = state.f
        eta = _scale(f, model) * model.eta
        within = np.einsum("pqhkpj->pqhkj", model.A)
        gain = np.einsum("iqhk,iqhkj,iq,hk->ij", eta, within, f, f)
        loss = f * np.einsum("ijhk,hk->ij", eta, f)
        return gain - loss

    @staticmethod
    def moments(state: DiscreteState, model: DiscreteModel) -> MomentSet:
        return _moment_set(state.t, state.f, model)

    @staticmethod
    def total_density(state: DiscreteState) -> float:
        return float(state.f.sum())

    @staticmethod
    def step_rk4(
        state: DiscreteState,
        model: DiscreteModel,
        dt: float,
        diagnostics: Optional[IntegratorDiagnostics] = None,
        clamp: bool = True,
    ) -> DiscreteState:
        if dt <= 0:
            raise UsageError(f"dt must be positive, got {dt}")
        _check_state(state, model)
        f = _advance(state.t, state.f, model, dt, diagnostics, clamp)
        return DiscreteState(t=state.t + dt, f=f)

    @staticmethod
    def run_until(
        state: DiscreteState,
        model: DiscreteModel,
        t_end: float,
        dt: float,
        output_interval: Optional[float] = None,
        diagnostics: Optional[IntegratorDiagnostics] = None,
    ) -> list[MomentSet]:
        _, trajectory = DiscreteService.integrate(state, model, t_end, dt, output_interval, diagnostics)
        return trajectory

    @staticmethod
    def integrate(
        state: DiscreteState,
        model: DiscreteModel,
        t_end: float,
        dt: float,
        output_interval: Optional[float] = None,
        diagnostics: Optional[IntegratorDiagnostics] = None,
        clamp: bool = True,
    ) -> tuple[DiscreteState, list[MomentSet]]:
        if t_end <= state.t:
            raise UsageError(f"t_end = {t_end} must be after the state time {state.t}")
        _check_state(state, model)
        steps, every = march_plan(t_end - state.t, dt, output_interval)

        f = np.array(state.f)
        t0 = state.t
        t = t0
        trajectory = []
        for step in tqdm(range(steps), disable=not settings.SHOW_PROGRESS, desc="discrete"):
            f = _advance(t, f, model, dt, diagnostics, clamp)
            t = t0 + (step + 1) * dt
            if (step + 1) % every == 0 or step + 1 == steps:
                trajectory.append(_moment_set(t, f, model))
        return DiscreteState(t=t, f=f), trajectory

    @staticmethod
    def induced_model(model: InteractionModel, state: HomogeneousState) -> DiscreteModel:
        """Discrete model whose state F_ij = w_j f_i(u_j) evolves like the tabulated model.

        Micro-macro tables are frozen at the activations of `state`.
        """
        bundle = model.bundle
        if bundle.phi:
            raise UsageError("activity drift has no counterpart in the discrete structure")
        grid, n, m = model.grid, model.n, model.grid.size
        w = grid.weights

        eta = np.transpose(model.eta, (0, 2, 1, 3))

        A = identity_transition(n, m)
        for (h, k), tables in model.transitions.items():
            A[h, :, k, :] = 0.0
            for i, table in tables.items():
                A[h, :, k, :, i, :] = table * w
        A /= A.sum(axis=(4, 5), keepdims=True)

        E = _frozen_activations(state)
        mu = np.zeros((n, m, n))
        M = identity_macro_transition(n, m)
        for (h, k), rate in bundle.mu.items():
            mu[h, :, k] = evaluate_rate(rate, grid.nodes, E[k])
            kernels = {i: kernel for (hh, kk, i), kernel in bundle.M.items() if (hh, kk) == (h, k)}
            if kernels:
                M[h, :, k] = 0.0
                for i, kernel in kernels.items():
                    M[h, :, k, i, :] = evaluate_transition(kernel, grid.nodes, E[k], grid) * w
        M /= M.sum(axis=(3, 4), keepdims=True)

        P = np.zeros((n, m, n, m))
        for (i, k), table in model.proliferation.items():
            P[i, :, k, :] = table @ w
        D = np.zeros((n, m, n, m))
        for (i, k), rates in model.destruction.items():
            D[i, :, k, :] = rates

        return DiscreteModel.build(n, m, nodes=grid.nodes, eta=eta, A=A, mu=mu, M=M, P=P, D=D)

    @staticmethod
    def continuum_consistency(
        bundle: KernelBundle,
        n: int,
        m_sequence: list[int],
        initial: Callable[[int, np.ndarray], np.ndarray],
        t_end: float,
        dt: float,
        lower: float = 0.0,
        upper: float = 1.0,
        m_ref: Optional[int] = None,
        output_interval: Optional[float] = None,
    ) -> list[float]:
        """Discrepancy of the induced discrete model against a fine-grid continuous run.

        For each m the error is the largest |n_i - n_i^ref| or |E_i - E_i^ref|
        over the sampled times, including t = 0. Non-smooth kernels give
        unreliable sequences.
        """
        if not m_sequence:
            raise UsageError("m_sequence must not be empty")
        if m_ref is None:
            m_ref = 4 * (max(m_sequence) - 1) + 1

        reference = _continuous_moments(bundle, n, m_ref, initial, t_end, dt, lower, upper, output_interval)
        logger.info(f"Continuous reference on {m_ref} nodes: {len(reference)} samples")

        errors = []
        for m in m_sequence:
            grid = ActivityService.make_uniform_grid(lower, upper, m)
            model = InteractionModel.build(bundle, grid, n)
            start = ActivityService.sample(grid, n, initial)
            discrete = DiscreteService.induced_model(model, start)
            state = DiscreteState(t=start.t, f=start.values * grid.weights)
            _, trajectory = DiscreteService.integrate(state, discrete, t_end, dt, output_interval)
            rows = [_moment_set(state.t, state.f, discrete)] + trajectory
            errors.append(_max_discrepancy(rows, reference))
            logger.debug(f"m = {m}: discrepancy {errors[-1]:.3e}")
        return errors

    @staticmethod
    def empirical_orders(errors: list[float], m_sequence: list[int]) -> list[float]:
        """Observed convergence orders between successive resolutions, h = 1/(m - 1)."""
        orders = []
        for (e0, m0), (e1, m1) in zip(zip(errors, m_sequence), zip(errors[1:], m_sequence[1:])):
            if e1 == 0:
                orders.append(math.inf if e0 > 0 else math.nan)
                continue
            orders.append(math.log(e0 / e1) / math.log((m1 - 1) / (m0 - 1)))
        return orders


def _check_state(state: DiscreteState, model: DiscreteModel) -> None:
    if state.f.shape != (model.n, model.m):
        raise UsageError(f"state shape {state.f.shape} does not match model ({model.n}, {model.m})")


def _scale(f: np.ndarray, model: DiscreteModel) -> float:
    return 1.0 if model.density_scaling is None else float(model.density_scaling(f))


def _activations(f: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    densities = f.sum(axis=1)
    E = np.zeros(f.shape[0])
    occupied = densities > 0
    E[occupied] = (f @ nodes)[occupied] / densities[occupied]
    return E


def _frozen_activations(state: HomogeneousState) -> np.ndarray:
    moments = ActivityService.moments(state)
    return np.nan_to_num(np.array(moments.activations), nan=0.0)


def _discrete_rhs(f: np.ndarray, model: DiscreteModel) -> np.ndarray:
    scale = _scale(f, model)
    eta = scale * model.eta

    pairs = eta * f[:, :, None, None] * f[None, None, :, :]
    out = np.tensordot(pairs, model.A, axes=4) - f * np.einsum("ijhk,hk->ij", eta, f)

    if np.any(model.mu):
        mu = scale * model.mu
        E = _activations(f, model.nodes)
        gain = np.tensordot(mu * f[:, :, None] * E, model.M, axes=3)
        out += gain - f * (mu @ E)

    if np.any(model.P) or np.any(model.D):
        out += f * np.einsum("ijhk,hk->ij", eta * (model.P - model.D), f)
    return out


def _advance(t, f, model: DiscreteModel, dt, diagnostics, clamp) -> np.ndarray:
    return rk4_advance(
        lambda s, g: _discrete_rhs(g, model), t, f, dt, np.ones(model.m), diagnostics, clamp
    )


def _moment_set(t: float, f: np.ndarray, model: DiscreteModel) -> MomentSet:
    densities = f.sum(axis=1)
    firsts = f @ model.nodes
    return MomentSet(
        t=t,
        densities=[float(x) for x in densities],
        activations=[float(a / d) if d > 0 else float("nan") for a, d in zip(firsts, densities)],
    )


def _continuous_moments(bundle, n, m_ref, initial, t_end, dt, lower, upper, output_interval):
    grid = ActivityService.make_uniform_grid(lower, upper, m_ref)
    model = InteractionModel.build(bundle, grid, n)
    state = ActivityService.sample(grid, n, initial)
    _, trajectory = HomogeneousService.integrate(state, model, t_end, dt, output_interval)
    return [ActivityService.moments(state)] + trajectory


def _max_discrepancy(rows: list[MomentSet], reference: list[MomentSet]) -> float:
    if len(rows) != len(reference):
        raise UsageError("discrete and reference runs sampled different times")
    worst = 0.0
    for row, ref in zip(rows, reference):
        diffs = np.abs(np.array(row.densities) - np.array(ref.densities))
        act = np.abs(np.array(row.activations) - np.array(ref.activations))
        worst = max(worst, float(diffs.max()), float(np.nanmax(act, initial=0.0)))
    return worst
