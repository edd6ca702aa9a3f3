import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

# negative values this small are quadrature roundoff, not a broken state
NEGATIVE_ROUNDOFF = 1e-12


class ActivityGrid(BaseModel):
    """Collocation nodes and quadrature weights on the activity domain."""

    lower: float
    upper: float
    nodes: np.ndarray
    weights: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("nodes", "weights", mode="before")
    @classmethod
    def _as_array(cls, value):
        array = np.array(value, dtype=float)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check(self):
        if self.nodes.ndim != 1 or self.nodes.shape != self.weights.shape:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if self.nodes.size < 2:
            raise ValueError("an activity grid needs at least two nodes")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if self.nodes[0] != self.lower or self.nodes[-1] != self.upper:
            raise ValueError("first and last node must equal the domain bounds")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")
        span = self.upper - self.lower
        if abs(self.weights.sum() - span) > 1e-12 * span:
            raise ValueError("quadrature weights must sum to upper - lower")
        return self

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.size - 1)


class FunctionalSubsystem(BaseModel):
    index: int
    label: str
    activity_grid: ActivityGrid

    model_config = ConfigDict(frozen=True)


class HomogeneousState(BaseModel):
    """f[i][j] = f_i(t, u_j), a number density per unit activity."""

    t: float
    values: np.ndarray
    grid: ActivityGrid

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("values", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        array = np.array(value, dtype=float)
        if array.ndim == 1:
            array = array[None, :]
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.size:
            raise ValueError(
                f"values must have shape (n, {self.grid.size}), got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("distribution values must be finite")
        if np.any(self.values < -NEGATIVE_ROUNDOFF):
            raise ValueError("distribution values must be nonnegative")
        return self

    @property
    def n_subsystems(self) -> int:
        return int(self.values.shape[0])


class MomentSet(BaseModel):
    t: float
    densities: list[float]
    # NaN marks an empty subsystem
    activations: list[float]

    def row(self) -> list[float]:
        return [self.t, *self.densities, *self.activations]

    @staticmethod
    def columns(n: int) -> list[str]:
        return (
            ["t"]
            + [f"n_{i + 1}" for i in range(n)]
            + [f"E_{i + 1}" for i in range(n)]
        )

    def total(self) -> float:
        return float(sum(self.densities))


def subsystems(labels: list[str], grid: ActivityGrid) -> list[FunctionalSubsystem]:
    return [
        FunctionalSubsystem(index=i, label=label, activity_grid=grid)
        for i, label in enumerate(labels)
    ]

