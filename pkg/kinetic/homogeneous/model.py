import logging
from typing import Any, Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from kinetic.activity.model import ActivityGrid
from kinetic.config import settings
from kinetic.core.exceptions import ModelError

# Configure logger
logger = logging.getLogger(__name__)

Rate = Union[float, Callable[..., Any]]


class TransitionKernel(BaseModel):
    """Probability density of the output activity, given (u_star, u_field).

    `mass` is the share of the transition that lands in the destination
    subsystem the kernel is registered for.
    """

    mass: float = 1.0

    model_config = ConfigDict(frozen=True)

    def evaluate(self, u_star, u_field, grid: ActivityGrid) -> np.ndarray:
        """Values over the output nodes, shape broadcast(u_star, u_field) + (m,)."""
        raise NotImplementedError


class KernelBundle(BaseModel):
    """Grid-free description of one interaction model.

    Index conventions: eta and mu by (h, k); A and M by (h, k, i);
    P and D by (i, k); phi by i. Missing entries are zero, except that a
    pair with a rate and no transition kernel keeps its state (identity).
    """

    eta: dict[tuple[int, int], Any] = {}
    A: dict[tuple[int, int, int], Any] = {}
    mu: dict[tuple[int, int], Any] = {}
    M: dict[tuple[int, int, int], Any] = {}
    P: dict[tuple[int, int], Any] = {}
    D: dict[tuple[int, int], Any] = {}
    phi: dict[int, Any] = {}
    # interaction intensity over the sensitivity domain, applied to the field state
    domain_weight: Optional[Callable[[np.ndarray], np.ndarray]] = None
    strict_moments: bool = False

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    def max_index(self) -> int:
        keys = [
            *self.eta, *self.A, *self.mu, *self.M, *self.P, *self.D,
            *((i,) for i in self.phi),
        ]
        return max((max(key) for key in keys), default=-1)


def evaluate_rate(rate: Rate, u, v) -> np.ndarray:
    shape = np.broadcast_shapes(np.shape(u), np.shape(v))
    if callable(rate):
        return np.broadcast_to(np.asarray(rate(u, v), dtype=float), shape)
    return np.full(shape, float(rate))


def evaluate_transition(kernel, u_star, u_field, grid: ActivityGrid) -> np.ndarray:
    u_star = np.asarray(u_star, dtype=float)
    u_field = np.asarray(u_field, dtype=float)
    shape = np.broadcast_shapes(u_star.shape, u_field.shape) + (grid.size,)
    if isinstance(kernel, TransitionKernel):
        values = kernel.evaluate(u_star, u_field, grid)
    else:
        values = kernel(u_star[..., None], u_field[..., None], grid.nodes)
    return np.broadcast_to(np.asarray(values, dtype=float), shape)


class InteractionModel(BaseModel):
    """A KernelBundle tabulated on one activity grid.

    eta[h, k, a, b] holds the encounter rates over (u_star, u_field) node pairs.
    transitions[(h, k)][i] holds A as (a, b, j) tables; pairs listed in
    identity_pairs keep the candidate state. proliferation[(i, k)] is (a, b, j)
    and destruction[(i, k)] is (a, b).
    """

    n: int
    grid: ActivityGrid
    bundle: KernelBundle
    eta: np.ndarray
    transitions: dict[tuple[int, int], dict[int, np.ndarray]]
    identity_pairs: list[tuple[int, int]]
    proliferation: dict[tuple[int, int], np.ndarray]
    destruction: dict[tuple[int, int], np.ndarray]

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @model_validator(mode="after")
    def _check(self):
        if self.eta.shape != (self.n, self.n, self.grid.size, self.grid.size):
            raise ValueError(f"eta table has shape {self.eta.shape}")
        return self

    @property
    def has_macro(self) -> bool:
        return bool(self.bundle.mu)

    @property
    def is_conservative(self) -> bool:
        return not (self.proliferation or self.destruction)

    @classmethod
    def build(cls, bundle: KernelBundle, grid: ActivityGrid, n: int) -> "InteractionModel":
        if bundle.max_index() >= n:
            raise ModelError(
                f"kernel bundle refers to subsystem {bundle.max_index()} but n = {n}"
            )
        if bundle.mu and grid.lower < 0:
            raise ModelError(
                "micro-macro coupling weights encounters by E_k and needs a nonnegative activity domain"
            )

        eta = _tabulate_eta(bundle, grid, n)
        transitions, identity_pairs = _tabulate_transitions(bundle, grid, eta)
        _check_macro_transitions(bundle, grid)

        proliferation = {}
        for key, kernel in bundle.P.items():
            table = evaluate_transition(kernel, grid.nodes[:, None], grid.nodes[None, :], grid)
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise ModelError(f"proliferation kernel {key} must be finite and nonnegative")
            if np.any(table):
                proliferation[key] = np.ascontiguousarray(table)

        destruction = {}
        for key, rate in bundle.D.items():
            table = evaluate_rate(rate, grid.nodes[:, None], grid.nodes[None, :])
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise ModelError(f"destruction rate {key} must be finite and nonnegative")
            if np.any(table):
                destruction[key] = np.array(table)

        return cls(
            n=n,
            grid=grid,
            bundle=bundle,
            eta=eta,
            transitions=transitions,
            identity_pairs=identity_pairs,
            proliferation=proliferation,
            destruction=destruction,
        )


def _tabulate_eta(bundle: KernelBundle, grid: ActivityGrid, n: int) -> np.ndarray:
    m = grid.size
    eta = np.zeros((n, n, m, m))
    for (h, k), rate in bundle.eta.items():
        eta[h, k] = evaluate_rate(rate, grid.nodes[:, None], grid.nodes[None, :])
    if bundle.domain_weight is not None:
        eta *= np.asarray(bundle.domain_weight(grid.nodes), dtype=float)[None, None, None, :]
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise ModelError("encounter rates must be finite and nonnegative")
    return eta


def _tabulate_transitions(bundle: KernelBundle, grid: ActivityGrid, eta: np.ndarray):
    tolerance = settings.NORMALIZATION_TOLERANCE
    renormalize_below = settings.RENORMALIZATION_TOLERANCE

    grouped: dict[tuple[int, int], dict[int, np.ndarray]] = {}
    for (h, k, i), kernel in bundle.A.items():
        table = evaluate_transition(kernel, grid.nodes[:, None], grid.nodes[None, :], grid)
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ModelError(f"transition kernel A{(h, k, i)} must be finite and nonnegative")
        grouped.setdefault((h, k), {})[i] = np.array(table)

    for pair, tables in grouped.items():
        total = sum(table @ grid.weights for table in tables.values())
        error = float(np.max(np.abs(total - 1.0)))
        if error > renormalize_below:
            raise ModelError(
                f"transition kernel for pair {pair} integrates to {1.0 + error:.6g}, not 1"
            )
        if error > tolerance:
            logger.warning(f"Renormalizing transition kernel for pair {pair} (error {error:.3g})")
        for i in tables:
            tables[i] = np.ascontiguousarray(tables[i] / total[:, :, None])

    n = eta.shape[0]
    identity_pairs = [
        (h, k)
        for h in range(n)
        for k in range(n)
        if (h, k) not in grouped and np.any(eta[h, k] > 0)
    ]
    return grouped, identity_pairs


def macro_field_samples(grid: ActivityGrid) -> np.ndarray:
    m = grid.size
    return np.unique(grid.nodes[[0, m // 4, m // 2, (3 * m) // 4, m - 1]])


def _check_macro_transitions(bundle: KernelBundle, grid: ActivityGrid) -> None:
    pairs: dict[tuple[int, int], list] = {}
    for (h, k, i), kernel in bundle.M.items():
        pairs.setdefault((h, k), []).append(kernel)

    for pair, kernels in pairs.items():
        for e in macro_field_samples(grid):
            tables = [evaluate_transition(kernel, grid.nodes, e, grid) for kernel in kernels]
            if any(np.any(table < 0) or not np.all(np.isfinite(table)) for table in tables):
                raise ModelError(f"micro-macro kernel for pair {pair} must be finite and nonnegative")
            total = sum(table @ grid.weights for table in tables)
            error = float(np.max(np.abs(total - 1.0)))
            if error > settings.RENORMALIZATION_TOLERANCE:
                raise ModelError(
                    f"micro-macro kernel for pair {pair} integrates to {1.0 + error:.6g} at E = {e:g}"
                )

    for (h, k), rate in bundle.mu.items():
        for e in macro_field_samples(grid):
            values = evaluate_rate(rate, grid.nodes, e)
            if np.any(values < 0) or not np.all(np.isfinite(values)):
                raise ModelError(f"micro-macro rate {(h, k)} must be finite and nonnegative")
