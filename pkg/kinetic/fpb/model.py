import enum
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class NoiseKind(str, enum.Enum):
    UNIFORM = "uniform"
    TWO_POINT = "two_point"


class AdmissibilityPolicy(str, enum.Enum):
    RESAMPLE = "resample"
    SKIP = "skip"


class NoiseSpec(BaseModel):
    """Zero-mean bounded noise with variance sigma2."""

    kind: NoiseKind = NoiseKind.UNIFORM
    sigma2: float = Field(default=0.0, ge=0)

    model_config = ConfigDict(frozen=True)

    @property
    def bound(self) -> float:
        if self.kind is NoiseKind.UNIFORM:
            return math.sqrt(3 * self.sigma2)
        return math.sqrt(self.sigma2)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind is NoiseKind.UNIFORM:
            return rng.uniform(-self.bound, self.bound, size)
        return self.bound * rng.choice(np.array([-1.0, 1.0]), size)

    def scaled(self, eps: float) -> "NoiseSpec":
        return NoiseSpec(kind=self.kind, sigma2=eps * self.sigma2)


class Interval(BaseModel):
    lower: float = -math.inf
    upper: float = math.inf

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check(self):
        if not self.lower < self.upper:
            raise ValueError("interval needs lower < upper")
        return self

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values)
        return (values >= self.lower) & (values <= self.upper)


class Coefficient(BaseModel):
    """Affine coefficient c + slope * v."""

    constant: float = 0.0
    slope: float = 0.0

    model_config = ConfigDict(frozen=True)

    def __call__(self, v):
        return self.constant + self.slope * np.asarray(v, dtype=float)

    @property
    def is_constant(self) -> bool:
        return self.slope == 0.0

    def scaled(self, eps: float) -> "Coefficient":
        return Coefficient(constant=eps * self.constant, slope=eps * self.slope)

    def range_on(self, domain: Interval) -> tuple[float, float]:
        if self.slope == 0:
            return self.constant, self.constant
        ends = [self.constant + self.slope * x for x in (domain.lower, domain.upper)]
        return min(ends), max(ends)


def constant(c: float) -> Coefficient:
    return Coefficient(constant=c)


def proportional(c: float) -> Coefficient:
    return Coefficient(slope=c)


class PairRule(BaseModel):
    """v* = v + P(v)(w - v) + Q(v) eta, applied symmetrically to the partner."""

    P: Coefficient = Coefficient()
    Q: Coefficient = Coefficient()
    noise: NoiseSpec = NoiseSpec()
    domain: Interval = Interval()
    policy: AdmissibilityPolicy = AdmissibilityPolicy.RESAMPLE

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check(self):
        low, high = self.P.range_on(self.domain)
        if low < 0 or high > 1 or math.isnan(low) or math.isnan(high):
            raise ValueError("P must take values in [0, 1] on the domain")
        low, _ = self.Q.range_on(self.domain)
        if low < 0 or math.isnan(low):
            raise ValueError("Q must be nonnegative on the domain")
        return self


class Environment(BaseModel):
    """Distribution of the background value z the particles meet."""

    kind: str = Field(default="point", pattern="^(point|uniform)$")
    value: float = 0.0
    lower: float = 0.0
    upper: float = 1.0

    model_config = ConfigDict(frozen=True)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.lower, self.upper, size)
        return np.full(size, self.value)


class EnvRule(BaseModel):
    """v* = v + P_E(v) z - P(v) v + Q(v) eta."""

    P_E: Coefficient = Coefficient()
    P: Coefficient = Coefficient()
    Q: Coefficient = Coefficient()
    noise: NoiseSpec = NoiseSpec()
    domain: Interval = Interval()
    policy: AdmissibilityPolicy = AdmissibilityPolicy.RESAMPLE
    environment: Environment = Environment()

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check(self):
        for name, coefficient in (("P_E", self.P_E), ("P", self.P)):
            low, high = coefficient.range_on(self.domain)
            if low < 0 or high > 1 or math.isnan(low) or math.isnan(high):
                raise ValueError(f"{name} must take values in [0, 1] on the domain")
        low, _ = self.Q.range_on(self.domain)
        if low < 0 or math.isnan(low):
            raise ValueError("Q must be nonnegative on the domain")
        return self


class Ensemble(BaseModel):
    values: np.ndarray
    seed: Optional[int] = None
    t: float = 0.0

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, value):
        array = np.array(value, dtype=float).reshape(-1)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("ensemble values must be finite")
        return self

    @property
    def size(self) -> int:
        return int(self.values.size)
