import enum
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Solver(str, enum.Enum):
    HOMOGENEOUS = "homogeneous"
    DISCRETE = "discrete"
    SPATIAL = "spatial"
    FPB = "fpb"


class ScenarioSection(StrictModel):
    name: str
    solver: Solver
    description: str = ""


class NumericsSection(StrictModel):
    dt: float = Field(gt=0)
    t_end: float = Field(gt=0)
    output_interval: Optional[float] = Field(default=None, gt=0)
    seed: Optional[int] = None
    grid_size: int = Field(default=51, ge=2)


class OutputSection(StrictModel):
    directory: Optional[str] = None


# homogeneous


class InitialProfile(StrictModel):
    """Initial f_i with total density `density`."""

    shape: Literal["uniform", "gaussian", "linear"] = "uniform"
    density: float = Field(default=1.0, ge=0)
    center: float = 0.5
    width: float = Field(default=0.1, gt=0)
    # linear profile is 1 + slope * u
    slope: float = 0.0


class TumorImmuneParams(StrictModel):
    family: Literal["tumor_immune"]
    beta: float = Field(default=1.0, ge=0)
    kill: Optional[float] = Field(default=None, ge=0)
    # kill / beta: immune activation ability over tumor progression ability; replaces kill when given
    activation_ratio: Optional[float] = Field(default=None, ge=0)
    immune_proliferation: float = Field(default=0.5, ge=0)
    immune_destruction: float = Field(default=1.0, ge=0)
    progression_rate: float = Field(default=2.0, ge=0)
    progression_step: float = 0.1
    progression_width: float = Field(default=0.05, gt=0)
    activation_rate: float = Field(default=2.0, ge=0)
    activation_step: float = 0.1
    activation_width: float = Field(default=0.05, gt=0)
    relaxation: float = Field(default=0.0, ge=0)
    innate_level: float = 0.3

    @model_validator(mode="after")
    def _one_kill_parameter(self):
        if (self.kill is None) == (self.activation_ratio is None):
            raise ValueError("give exactly one of kill and activation_ratio")
        return self


class ConsensusParams(StrictModel):
    family: Literal["consensus"]
    rate: float = Field(default=1.0, ge=0)
    attraction: float = 0.5
    width: float = Field(default=0.15, gt=0)


class AttractionParams(StrictModel):
    family: Literal["attraction"]
    rate: float = Field(default=1.0, ge=0)
    attraction: float = 1.0
    width: float = Field(default=0.05, gt=0)


class ZeroParams(StrictModel):
    family: Literal["zero"]


ModelFamily = Annotated[
    Union[TumorImmuneParams, ConsensusParams, AttractionParams, ZeroParams],
    Field(discriminator="family"),
]


class HomogeneousSection(StrictModel):
    lower: float = 0.0
    upper: float = 1.0
    labels: list[str] = ["population"]
    model: ModelFamily
    initial: list[InitialProfile]
    clamp: bool = True

    @model_validator(mode="after")
    def _check(self):
        if not self.lower < self.upper:
            raise ValueError("lower must be below upper")
        if len(self.initial) != len(self.labels):
            raise ValueError(f"initial needs one profile per subsystem ({len(self.labels)})")
        return self


# discrete


class DiscreteSection(StrictModel):
    """Tables are flat row-major lists in the documented index order."""

    n: int = Field(ge=1)
    m: int = Field(ge=1)
    nodes: Optional[list[float]] = None
    eta: Optional[list[float]] = None
    A: Optional[list[float]] = None
    mu: Optional[list[float]] = None
    M: Optional[list[float]] = None
    P: Optional[list[float]] = None
    D: Optional[list[float]] = None
    initial: list[list[float]]

    @model_validator(mode="after")
    def _check(self):
        if len(self.initial) != self.n or any(len(row) != self.m for row in self.initial):
            raise ValueError(f"initial must be a {self.n} x {self.m} matrix")
        return self


# spatial


class WeightsSection(StrictModel):
    target: float = Field(default=0.6, ge=0)
    vacuum: float = Field(default=0.2, ge=0)
    stream: float = Field(default=0.2, ge=0)
    density_gain: float = Field(default=0.5, gt=0)
    activity_gain: float = Field(default=1.0, gt=0)


class SensorySection(StrictModel):
    theta: float = Field(default=math.pi / 2, gt=0, le=math.pi)
    r_visibility: float = Field(default=2.0, gt=0)
    critical_count: float = Field(default=7.0, gt=0)
    mode: Literal["metric", "topological"] = "topological"


class SpatialSection(StrictModel):
    arena: str
    alpha: float = Field(default=1.0, ge=0, le=1)
    closed: bool = False
    n_directions: int = Field(default=8, ge=2)
    rho_jam: float = Field(default=6.0, gt=0)
    eta0: float = Field(default=1.0, ge=0)
    sharpness: float = Field(default=4.0, ge=0)
    stencil_radius: int = Field(default=2, ge=1)
    activity_nodes: int = Field(default=3, ge=2)
    initial_density: float = Field(default=2.0, ge=0)
    # inclusive column range of the initial crowd
    initial_columns: tuple[int, int] = (0, 0)
    frame_interval: Optional[float] = Field(default=None, gt=0)
    weights: WeightsSection = WeightsSection()
    sensory: SensorySection = SensorySection()

    @field_validator("arena")
    @classmethod
    def _exists(cls, value: str) -> str:
        if not Path(value).is_file():
            raise ValueError(f"arena file {value} does not exist")
        return value


# fpb


class NoiseSection(StrictModel):
    kind: Literal["uniform", "two_point"] = "uniform"
    sigma2: float = Field(default=0.0, ge=0)


class EnvironmentSection(StrictModel):
    rate: float = Field(default=0.0, ge=0)
    p_env: float = Field(default=0.0, ge=0, le=1)
    p: float = Field(default=0.0, ge=0, le=1)
    kind: Literal["point", "uniform"] = "point"
    value: float = 0.0
    lower: float = 0.0
    upper: float = 1.0


class FpbSection(StrictModel):
    n_particles: int = Field(default=10000, ge=2)
    lam: float = Field(default=1.0, ge=0)
    p: float = Field(default=0.5, ge=0, le=1)
    q: float = Field(default=0.0, ge=0)
    # Q(v) = q * v instead of the constant q
    q_proportional: bool = False
    lower: float = -math.inf
    upper: float = math.inf
    policy: Literal["resample", "skip"] = "resample"
    initial_lower: float = 0.0
    initial_upper: float = 1.0
    histogram_bins: int = Field(default=50, ge=1)
    noise: NoiseSection = NoiseSection()
    environment: Optional[EnvironmentSection] = None

    @model_validator(mode="after")
    def _check(self):
        if self.n_particles % 2:
            raise ValueError("n_particles must be even")
        if not (self.lower <= self.initial_lower < self.initial_upper <= self.upper):
            raise ValueError("initial range must lie inside [lower, upper]")
        return self


class ScenarioConfig(StrictModel):
    scenario: ScenarioSection
    numerics: NumericsSection
    homogeneous: Optional[HomogeneousSection] = None
    discrete: Optional[DiscreteSection] = None
    spatial: Optional[SpatialSection] = None
    fpb: Optional[FpbSection] = None
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _solver_section(self):
        solver = self.scenario.solver.value
        if getattr(self, solver) is None:
            raise ValueError(f"solver {solver} needs a [{solver}] section")
        extra = [s.value for s in Solver if s.value != solver and getattr(self, s.value) is not None]
        if extra:
            raise ValueError(f"sections {extra} do not belong to solver {solver}")
        return self

    def solver_section(self):
        return getattr(self, self.scenario.solver.value)
