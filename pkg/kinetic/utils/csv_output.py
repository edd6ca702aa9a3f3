from pathlib import Path
from typing import Sequence

import pandas as pd

from kinetic.config import settings


def write_table(path: Path, columns: Sequence[str], rows) -> Path:
    """Write rows under a fixed header.

    Floats go through a printf-style format so the bytes do not depend on
    locale or pandas version defaults; the last row is newline-terminated.
    """
    frame = pd.DataFrame(list(rows), columns=list(columns))
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(
        path,
        index=False,
        float_format=settings.CSV_FLOAT_FORMAT,
        lineterminator="\n",
    )
    return path
