# kinetic/config.py
import os
from dotenv import load_dotenv
from pydantic_settings import BaseSettings

load_dotenv()


class Settings(BaseSettings):
    # Application settings
    DEBUG: bool = os.getenv("DEBUG", "False").lower() == "true"
    PROJECT_NAME: str = "kinetic"
    VERSION: str = "1.0.0"
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Output settings
    OUTPUT_DIR: str = os.getenv("OUTPUT_DIR", "runs")
    CSV_FLOAT_FORMAT: str = "%.17g"
    SHOW_PROGRESS: bool = os.getenv("SHOW_PROGRESS", "False").lower() == "true"

    # Extra scenario directories, separated by os.pathsep
    SCENARIO_DIRS: str = os.getenv("SCENARIO_DIRS", "")

    # Kernel validation
    NORMALIZATION_TOLERANCE: float = float(os.getenv("NORMALIZATION_TOLERANCE", 1e-8))
    RENORMALIZATION_TOLERANCE: float = float(
        os.getenv("RENORMALIZATION_TOLERANCE", 1e-3)
    )
    DISCRETE_NORMALIZATION_TOLERANCE: float = float(
        os.getenv("DISCRETE_NORMALIZATION_TOLERANCE", 1e-12)
    )

    # Monte Carlo settings
    ADMISSIBILITY_RETRIES: int = int(os.getenv("ADMISSIBILITY_RETRIES", 32))

    # Crowd model defaults
    DEFAULT_DIRECTIONS: int = int(os.getenv("DEFAULT_DIRECTIONS", 8))
    JAM_DENSITY: float = float(os.getenv("JAM_DENSITY", 6.0))

    class Config:
        case_sensitive = True

    def scenario_dirs(self) -> list[str]:
        return [d for d in self.SCENARIO_DIRS.split(os.pathsep) if d]


settings = Settings()
