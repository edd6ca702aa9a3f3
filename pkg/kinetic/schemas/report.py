from typing import Optional

from pydantic import BaseModel


class RunReport(BaseModel):
    scenario: str
    solver: str
    wall_time: float
    steps: int
    conservation_drift: Optional[float] = None
    clamp_events: int = 0
    clamp_mass: float = 0.0
    output_dir: str
    # relative path -> sha256
    manifest: dict[str, str] = {}
    summary: dict[str, float] = {}


class ScenarioEntry(BaseModel):
    name: str
    solver: str
    description: str
    path: str


class SweepPoint(BaseModel):
    value: float
    initial_density: float
    final_density: float

    @property
    def ratio(self) -> float:
        return self.final_density / self.initial_density
