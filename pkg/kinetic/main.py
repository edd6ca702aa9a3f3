import logging

import click

from kinetic.config import settings
from kinetic.scenarios.controller import list_command, run_command, sweep_command, validate_command

logging.basicConfig(
    level=settings.LOG_LEVEL,
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)

# Configure logging
logger = logging.getLogger(__name__)


@click.group()
@click.version_option(settings.VERSION, prog_name=settings.PROJECT_NAME)
def cli():
    """Kinetic models of active particle systems."""


cli.add_command(run_command)
cli.add_command(list_command)
cli.add_command(validate_command)
cli.add_command(sweep_command)


if __name__ == "__main__":
    cli()
