import enum
import math

from pydantic import BaseModel, ConfigDict, Field, field_validator


class SensoryMode(str, enum.Enum):
    METRIC = "metric"
    TOPOLOGICAL = "topological"


class SensoryConfig(BaseModel):
    """Cone geometry of what a particle senses.

    theta is the symmetric semi-amplitude of the cone. In topological mode the
    sensory radius adapts so the cone holds critical_count neighbours.
    """

    theta: float = Field(gt=0, le=math.pi)
    r_visibility: float = Field(gt=0)
    critical_count: float = Field(default=7.0, gt=0)
    mode: SensoryMode = SensoryMode.TOPOLOGICAL

    model_config = ConfigDict(frozen=True)

    @field_validator("r_visibility")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("r_visibility must be finite")
        return value


class DomainPair(BaseModel):
    r_sensory: float = Field(ge=0)
    r_visibility: float = Field(ge=0)
    theta: float = math.pi

    model_config = ConfigDict(frozen=True)
