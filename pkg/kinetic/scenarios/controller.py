import logging
from typing import Optional

import click

from kinetic.core import status
from kinetic.core.exceptions import ConfigurationError, KineticError
from kinetic.scenarios.service import ScenarioService

# Configure logger
logger = logging.getLogger(__name__)


def _fail(e: Exception) -> None:
    if isinstance(e, ConfigurationError):
        where = f" (line {e.line})" if e.line is not None else ""
        click.echo(f"error: {e}{where}", err=True)
        raise SystemExit(e.status_code)
    if isinstance(e, KineticError):
        click.echo(f"error: {e}", err=True)
        raise SystemExit(e.status_code)
    if isinstance(e, ValueError):
        click.echo(f"error: {e}", err=True)
        raise SystemExit(status.EXIT_VALIDATION_ERROR)
    logger.exception("Unexpected failure")
    click.echo(f"error: an unexpected error occurred: {e}", err=True)
    raise SystemExit(status.EXIT_RUNTIME_ERROR)


scenario_dir_option = click.option(
    "--scenario-dir",
    "scenario_dirs",
    multiple=True,
    type=click.Path(file_okay=False),
    help="Extra directory searched for scenario files.",
)


@click.command("run")
@click.argument("scenario")
@click.option("--seed", type=int, default=None, help="Override numerics.seed.")
@click.option("--t-end", type=float, default=None, help="Override numerics.t_end.")
@click.option("--dt", type=float, default=None, help="Override numerics.dt.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@scenario_dir_option
def run_command(
    scenario: str,
    seed: Optional[int],
    t_end: Optional[float],
    dt: Optional[float],
    out: Optional[str],
    scenario_dirs: tuple[str, ...],
):
    """Run a scenario file or a registered scenario name."""
    try:
        path = ScenarioService.resolve(scenario, list(scenario_dirs))
        config = ScenarioService.load_scenario(path)
        config = ScenarioService.apply_overrides(config, seed=seed, t_end=t_end, dt=dt, out=out)
        report = ScenarioService.run(config)
    except Exception as e:
        _fail(e)
    click.echo(f"{report.scenario}: {report.steps} steps in {report.wall_time:.2f}s -> {report.output_dir}")
    if report.conservation_drift is not None:
        click.echo(f"conservation drift {report.conservation_drift:.3g}")
    for key, value in report.summary.items():
        click.echo(f"{key} = {value:.6g}")


@click.command("list")
@scenario_dir_option
def list_command(scenario_dirs: tuple[str, ...]):
    """List registered scenarios."""
    try:
        entries = ScenarioService.list_scenarios(list(scenario_dirs))
    except Exception as e:
        _fail(e)
    for entry in entries:
        click.echo(f"{entry.name}\t{entry.solver}\t{entry.description}")


@click.command("validate")
@click.argument("scenario")
@scenario_dir_option
def validate_command(scenario: str, scenario_dirs: tuple[str, ...]):
    """Parse a scenario and build its model without running it."""
    try:
        path = ScenarioService.resolve(scenario, list(scenario_dirs))
        config = ScenarioService.load_scenario(path)
        ScenarioService.validate(config)
    except Exception as e:
        _fail(e)
    click.echo(f"{config.scenario.name}: ok")


@click.command("sweep")
@click.argument("scenario")
@click.option("--param", required=True, help="Parameter name or dotted path, e.g. activation_ratio.")
@click.option("--values", required=True, help="Comma-separated values.")
@scenario_dir_option
def sweep_command(scenario: str, param: str, values: str, scenario_dirs: tuple[str, ...]):
    """Final over initial n_1 for a list of parameter values."""
    try:
        numbers = [float(v) for v in values.split(",") if v.strip()]
        if not numbers:
            raise ConfigurationError("--values needs at least one number", key="values")
        path = ScenarioService.resolve(scenario, list(scenario_dirs))
        config = ScenarioService.load_scenario(path)
        points = ScenarioService.sweep(config, param, numbers)
    except Exception as e:
        _fail(e)
    click.echo(f"{param}\tn_1(0)\tn_1(T)\tratio")
    for point in points:
        click.echo(f"{point.value:g}\t{point.initial_density:.6g}\t{point.final_density:.6g}\t{point.ratio:.6g}")
