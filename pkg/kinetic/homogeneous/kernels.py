"""Canonical transition kernels and the model families scenario files can name."""
import numpy as np
from pydantic import Field

from kinetic.activity.model import ActivityGrid
from kinetic.homogeneous.model import KernelBundle, TransitionKernel


class Bump(TransitionKernel):
    """Gaussian output density normalized on the grid.

    Centered at u_star + attraction * (u_field - u_star) + drift, clipped to
    the activity domain.
    """

    width: float = Field(gt=0)
    attraction: float = 0.0
    drift: float = 0.0

    def evaluate(self, u_star, u_field, grid: ActivityGrid) -> np.ndarray:
        center = np.clip(
            u_star + self.attraction * (u_field - u_star) + self.drift,
            grid.lower,
            grid.upper,
        )
        d2 = (grid.nodes - center[..., None]) ** 2
        raw = np.exp(-(d2 - d2.min(axis=-1, keepdims=True)) / (2 * self.width**2))
        return self.mass * raw / (raw @ grid.weights)[..., None]


class Dirac(TransitionKernel):
    """All output mass at the node of u_star.

    With activity_weighted the mass scales with u_star, so more advanced
    candidates produce more offspring.
    """

    activity_weighted: bool = False

    def evaluate(self, u_star, u_field, grid: ActivityGrid) -> np.ndarray:
        u_star = np.broadcast_to(u_star, np.broadcast_shapes(np.shape(u_star), np.shape(u_field)))
        index = np.abs(u_star[..., None] - grid.nodes).argmin(axis=-1)
        onehot = np.arange(grid.size) == index[..., None]
        mass = self.mass * u_star[..., None] if self.activity_weighted else self.mass
        return mass * onehot / grid.weights


class Uniform(TransitionKernel):

    def evaluate(self, u_star, u_field, grid: ActivityGrid) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(u_star), np.shape(u_field)) + (grid.size,)
        return np.full(shape, self.mass / (grid.upper - grid.lower))


def relaxation_drift(rate: float, level: float):
    """Activity drift phi(u) = -rate * (u - level)."""

    def phi(t, u, moments):
        return -rate * (u - level)

    return phi


def consensus_bundle(rate: float = 1.0, attraction: float = 0.5, width: float = 0.15) -> KernelBundle:
    return KernelBundle(
        eta={(0, 0): rate},
        A={(0, 0, 0): Bump(width=width, attraction=attraction)},
    )


def attraction_to_mean_bundle(rate: float = 1.0, width: float = 0.05, attraction: float = 1.0) -> KernelBundle:
    """Micro-macro drift of every particle toward the subsystem's activation."""
    return KernelBundle(
        mu={(0, 0): rate},
        M={(0, 0, 0): Bump(width=width, attraction=attraction)},
    )


def destruction_bundle(rate: float = 1.0) -> KernelBundle:
    return KernelBundle(eta={(0, 0): 1.0}, D={(0, 0): rate})


def tumor_immune_bundle(
    beta: float = 1.0,
    kill: float = 1.0,
    immune_proliferation: float = 0.5,
    immune_destruction: float = 1.0,
    progression_rate: float = 2.0,
    progression_step: float = 0.1,
    progression_width: float = 0.05,
    activation_rate: float = 2.0,
    activation_step: float = 0.1,
    activation_width: float = 0.05,
    relaxation: float = 0.0,
    innate_level: float = 0.3,
) -> KernelBundle:
    """Subsystem 0 is tumor (activity = progression), 1 is immune (activity = activation).

    Tumor cells progress through interactions with their own mean field and
    proliferate on meeting immune cells at rate beta * u_tumor. Immune cells
    detect the tumor through its mean field and move up in activation; on
    meeting tumor cells they proliferate at rate immune_proliferation * u_immune
    and are destroyed at rate immune_destruction * u_tumor. Activated immune
    cells destroy tumor cells at rate kill * u_immune. Both activities climb
    toward the top of the domain, where proliferation plateaus.

    Densities follow
        dn_tumor/dt  = n_tumor * n_immune * (beta * E_tumor - kill * E_immune)
        dn_immune/dt = n_tumor * n_immune * (immune_proliferation * E_immune - immune_destruction * E_tumor)
    so kill / beta decides which population wins once the activities settle.
    """
    return KernelBundle(
        eta={(0, 1): 1.0, (1, 0): 1.0},
        mu={(0, 0): progression_rate, (1, 0): activation_rate},
        M={
            (0, 0, 0): Bump(width=progression_width, drift=progression_step),
            (1, 0, 1): Bump(width=activation_width, drift=activation_step),
        },
        P={
            (0, 1): Dirac(mass=beta, activity_weighted=True),
            (1, 0): Dirac(mass=immune_proliferation, activity_weighted=True),
        },
        D={
            (0, 1): lambda u, v: kill * v,
            (1, 0): lambda u, v: immune_destruction * v,
        },
        phi={1: relaxation_drift(relaxation, innate_level)} if relaxation > 0 else {},
    )


def zero_bundle() -> KernelBundle:
    return KernelBundle()


MODEL_FAMILIES = {
    "tumor_immune": tumor_immune_bundle,
    "consensus": consensus_bundle,
    "attraction": attraction_to_mean_bundle,
    "zero": zero_bundle,
}
