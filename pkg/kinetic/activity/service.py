from typing import Callable

import numpy as np

from kinetic.activity.model import ActivityGrid, HomogeneousState, MomentSet
from kinetic.core.exceptions import UndefinedMomentError, UsageError


class ActivityService:

    @staticmethod
    def make_uniform_grid(lower: float, upper: float, m: int) -> ActivityGrid:
        """Equally spaced nodes with composite-trapezoid weights."""
        if m < 2:
            raise UsageError(f"grid needs at least 2 nodes, got {m}")
        if not lower < upper:
            raise UsageError(f"grid bounds must satisfy lower < upper, got {lower}, {upper}")

        nodes = np.linspace(lower, upper, m)
        h = (upper - lower) / (m - 1)
        weights = np.full(m, h)
        weights[0] = weights[-1] = h / 2
        return ActivityGrid(lower=lower, upper=upper, nodes=nodes, weights=weights)

    @staticmethod
    def density(state: HomogeneousState, i: int) -> float:
        ActivityService._check_index(state, i)
        return float(np.dot(state.grid.weights, state.values[i]))

    @staticmethod
    def activation(state: HomogeneousState, i: int) -> float:
        n_i = ActivityService.density(state, i)
        if n_i <= 0:
            raise UndefinedMomentError(f"activation of empty subsystem {i} is undefined")
        first = float(np.dot(state.grid.weights * state.grid.nodes, state.values[i]))
        return first / n_i

    @staticmethod
    def moments(state: HomogeneousState) -> MomentSet:
        return ActivityService.moments_of(state.t, state.values, state.grid)

    @staticmethod
    def moments_of(t: float, values: np.ndarray, grid: ActivityGrid) -> MomentSet:
        """Moments of a raw (n, m) array, used inside integrator stages."""
        densities = values @ grid.weights
        firsts = values @ (grid.weights * grid.nodes)
        activations = [
            float(first / n) if n > 0 else float("nan")
            for n, first in zip(densities, firsts)
        ]
        return MomentSet(
            t=t,
            densities=[float(n) for n in densities],
            activations=activations,
        )

    @staticmethod
    def total_density(state: HomogeneousState) -> float:
        return float(np.sum(state.values @ state.grid.weights))

    @staticmethod
    def sample(
        grid: ActivityGrid,
        n: int,
        fn: Callable[[int, np.ndarray], np.ndarray],
        t: float = 0.0,
    ) -> HomogeneousState:
        """Build a state from fn(i, u) evaluated on the grid nodes."""
        values = np.stack(
            [np.broadcast_to(np.asarray(fn(i, grid.nodes), dtype=float), grid.nodes.shape) for i in range(n)]
        )
        return HomogeneousState(t=t, values=values, grid=grid)

    @staticmethod
    def _check_index(state: HomogeneousState, i: int) -> None:
        if not 0 <= i < state.n_subsystems:
            raise UsageError(
                f"subsystem index {i} out of range for {state.n_subsystems} subsystems"
            )
