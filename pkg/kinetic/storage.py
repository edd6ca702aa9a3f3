from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Sequence
import logging

from kinetic.config import settings
from kinetic.utils.csv_output import write_table
from kinetic.utils.hashing import file_digest

# Configure logger
logger = logging.getLogger(__name__)


class RunStorage:
    """Collects the files one run writes into its output directory."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[Path] = []

    def write_csv(self, name: str, columns: Sequence[str], rows) -> Path:
        path = write_table(self.root / name, columns, rows)
        self.files.append(path)
        return path

    def manifest(self) -> dict[str, str]:
        return {
            str(path.relative_to(self.root)): file_digest(path) for path in self.files
        }


@contextmanager
def get_storage(root: Path) -> Iterator[RunStorage]:
    """Output session for a run; partial outputs are reported on failure."""
    create_output_dir(root)
    storage = RunStorage(root)
    try:
        yield storage
        logger.info(f"Wrote {len(storage.files)} output files to {root}")
    except Exception as e:
        logger.error(f"Run failed after writing {len(storage.files)} files: {e}")
        raise


def create_output_dir(root: Path) -> Path:
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(f"Error creating output directory {root}: {e}")
        raise
    if settings.DEBUG:
        logger.debug(f"Output directory ready: {root}")
    return root
