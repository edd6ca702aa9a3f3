from pathlib import Path
from typing import Optional

import numpy as np

from kinetic.config import settings


def get_rng(seed: Optional[int]) -> np.random.Generator:
    """Single sequential random stream for one run."""
    return np.random.Generator(np.random.PCG64(seed))


def get_output_dir(override: Optional[str] = None) -> Path:
    return Path(override) if override else Path(settings.OUTPUT_DIR)


def get_scenario_dirs(extra: Optional[list[str]] = None) -> list[Path]:
    dirs = [Path(d) for d in settings.scenario_dirs()]
    if extra:
        dirs.extend(Path(d) for d in extra)
    return dirs
