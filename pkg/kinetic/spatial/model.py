import enum
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from kinetic.activity.model import ActivityGrid
from kinetic.config import settings


class CellKind(enum.IntEnum):
    WALKABLE = 0
    WALL = 1
    EXIT = 2


CELL_SYMBOLS = {".": CellKind.WALKABLE, "#": CellKind.WALL, "E": CellKind.EXIT}


class Arena(BaseModel):
    """Rectangular venue of square cells; +x is increasing column, +y increasing row."""

    cells: np.ndarray
    dx: float = Field(default=1.0, gt=0)
    alpha: float = Field(default=1.0, ge=0, le=1)

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("cells", mode="before")
    @classmethod
    def _as_codes(cls, value):
        array = np.array(value, dtype=np.int8)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check(self):
        if self.cells.ndim != 2:
            raise ValueError("arena cells must form a 2-d grid")
        if not np.isin(self.cells, [kind.value for kind in CellKind]).all():
            raise ValueError("arena holds an unknown cell kind")
        if not np.any(self.cells == CellKind.WALKABLE):
            raise ValueError("arena needs at least one walkable cell")
        return self

    @classmethod
    def from_rows(cls, rows: list[str], dx: float = 1.0, alpha: float = 1.0) -> "Arena":
        widths = {len(row) for row in rows}
        if len(widths) != 1:
            raise ValueError("arena rows must all have the same width")
        try:
            cells = [[CELL_SYMBOLS[symbol] for symbol in row] for row in rows]
        except KeyError as e:
            raise ValueError(f"unknown arena symbol {e.args[0]!r}") from e
        return cls(cells=cells, dx=dx, alpha=alpha)

    def closed(self) -> "Arena":
        """Same venue with every exit walled up."""
        cells = np.where(self.cells == CellKind.EXIT, CellKind.WALL, self.cells)
        return Arena(cells=cells, dx=self.dx, alpha=self.alpha)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def walkable(self) -> np.ndarray:
        return self.cells == CellKind.WALKABLE

    @property
    def exits(self) -> np.ndarray:
        return self.cells == CellKind.EXIT


class CrowdParams(BaseModel):
    n_directions: int = Field(default=settings.DEFAULT_DIRECTIONS, ge=2)
    rho_jam: float = Field(default=settings.JAM_DENSITY, gt=0)
    eta0: float = Field(default=1.0, ge=0)
    # von Mises-like concentration of the directional law
    sharpness: float = Field(default=4.0, ge=0)
    # half-width, in cells, of the neighbourhood scanned for vacuum
    stencil_radius: int = Field(default=2, ge=1)

    model_config = ConfigDict(frozen=True)

    @field_validator("n_directions")
    @classmethod
    def _even(cls, value: int) -> int:
        if value % 2:
            raise ValueError("n_directions must be even so every direction has a reverse")
        return value

    def directions(self) -> np.ndarray:
        """Unit vectors e_d, shape (N_d, 2); near-zero components are exactly 0."""
        theta = 2 * math.pi * np.arange(self.n_directions) / self.n_directions
        vectors = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        vectors[np.abs(vectors) < 1e-12] = 0.0
        return vectors


class DecisionWeights(BaseModel):
    """Base weights of the three trends and how density and activity shift them.

    Evaluated weights are (target, vacuum * (1 + density_gain * rho),
    stream * (1 + activity_gain * u)) normalized to sum 1.
    """

    target: float = Field(default=0.6, ge=0)
    vacuum: float = Field(default=0.2, ge=0)
    stream: float = Field(default=0.2, ge=0)
    density_gain: float = Field(default=0.5, gt=0)
    activity_gain: float = Field(default=1.0, gt=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check(self):
        if self.target + self.vacuum + self.stream <= 0:
            raise ValueError("at least one decision weight must be positive")
        return self

    def evaluate(self, rho, u) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rho = np.asarray(rho, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(rho.shape, u.shape)
        target = np.full(shape, self.target)
        vacuum = np.broadcast_to(self.vacuum * (1 + self.density_gain * rho), shape)
        stream = np.broadcast_to(self.stream * np.maximum(0.0, 1 + self.activity_gain * u), shape)
        total = target + vacuum + stream
        total = np.where(total > 0, total, 1.0)
        return target / total, vacuum / total, stream / total


class SpatialState(BaseModel):
    """f[d, row, col, j]: density per unit activity moving along e_d."""

    t: float
    f: np.ndarray
    grid: ActivityGrid
    evacuated: float = 0.0

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("f", mode="before")
    @classmethod
    def _as_array(cls, value):
        array = np.array(value, dtype=float)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check(self):
        if self.f.ndim != 4 or self.f.shape[3] != self.grid.size:
            raise ValueError(f"f must have shape (N_d, rows, cols, {self.grid.size})")
        if not np.all(np.isfinite(self.f)):
            raise ValueError("f must be finite")
        if np.any(self.f < -1e-12):
            raise ValueError("f must be nonnegative")
        return self
