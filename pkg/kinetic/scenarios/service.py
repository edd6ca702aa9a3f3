import logging
import re
import time
from pathlib import Path
from typing import Any, Optional

import numpy as np
import tomli
from pydantic import BaseModel, ConfigDict, ValidationError
from tqdm import tqdm

from kinetic.activity.model import ActivityGrid, HomogeneousState, MomentSet
from kinetic.activity.service import ActivityService
from kinetic.config import settings
from kinetic.core.deps import get_output_dir, get_rng, get_scenario_dirs
from kinetic.core.exceptions import ConfigurationError, SimulationError
from kinetic.discrete.model import DiscreteModel, DiscreteState
from kinetic.discrete.service import DiscreteService
from kinetic.domains.model import SensoryConfig, SensoryMode
from kinetic.fpb.model import (
    AdmissibilityPolicy,
    Coefficient,
    Environment,
    EnvRule,
    Interval,
    NoiseKind,
    NoiseSpec,
    PairRule,
    constant,
    proportional,
)
from kinetic.fpb.service import MonteCarloService
from kinetic.homogeneous.kernels import MODEL_FAMILIES
from kinetic.homogeneous.model import InteractionModel
from kinetic.homogeneous.service import HomogeneousService
from kinetic.schemas.report import RunReport, ScenarioEntry, SweepPoint
from kinetic.schemas.scenario import (
    DiscreteSection,
    FpbSection,
    HomogeneousSection,
    InitialProfile,
    ScenarioConfig,
    Solver,
    SpatialSection,
)
from kinetic.spatial.model import CrowdParams, DecisionWeights
from kinetic.spatial.service import CrowdService
from kinetic.storage import get_storage
from kinetic.utils.integrator import IntegratorDiagnostics, march_plan

# Configure logger
logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"


class Table(BaseModel):
    columns: list[str]
    rows: list[list[Any]]


class SimulationResult(BaseModel):
    """Everything a run produces before it is written out."""

    timeseries: Table
    final_state: Table
    extra_tables: dict[str, Table] = {}
    steps: int
    conservation_drift: Optional[float] = None
    diagnostics: IntegratorDiagnostics = IntegratorDiagnostics()
    summary: dict[str, float] = {}

    model_config = ConfigDict(arbitrary_types_allowed=True)


class ScenarioService:

    @staticmethod
    def load_scenario(path) -> ScenarioConfig:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"scenario file {path} not found")
        data = _parse(path)

        spatial = data.get("spatial")
        if isinstance(spatial, dict) and isinstance(spatial.get("arena"), str):
            arena = Path(spatial["arena"])
            if not arena.is_absolute():
                spatial["arena"] = str((path.parent / arena).resolve())

        config = _validate(data, source=str(path))
        logger.info(f"Loaded scenario {config.scenario.name} ({config.scenario.solver.value}) from {path}")
        return config

    @staticmethod
    def resolve(name_or_path: str, extra_dirs: Optional[list[str]] = None) -> Path:
        """A scenario file path, or the file of a registered scenario name."""
        candidate = Path(name_or_path)
        if candidate.is_file():
            return candidate
        for entry in ScenarioService.list_scenarios(extra_dirs):
            if entry.name == name_or_path:
                return Path(entry.path)
        raise ConfigurationError(f"no scenario file or registered scenario named {name_or_path!r}")

    @staticmethod
    def list_scenarios(extra_dirs: Optional[list[str]] = None) -> list[ScenarioEntry]:
        """Shipped scenarios plus those in user directories; shipped names win."""
        entries: dict[str, ScenarioEntry] = {}
        for directory in [DATA_DIR, *get_scenario_dirs(extra_dirs)]:
            if not directory.is_dir():
                logger.warning(f"Scenario directory {directory} does not exist")
                continue
            for path in sorted(directory.glob("*.cfg")):
                try:
                    section = _parse(path).get("scenario", {})
                    entry = ScenarioEntry(
                        name=section["name"],
                        solver=section["solver"],
                        description=section.get("description", ""),
                        path=str(path),
                    )
                except (ConfigurationError, KeyError, TypeError, ValidationError) as e:
                    logger.warning(f"Skipping unreadable scenario {path}: {e}")
                    continue
                entries.setdefault(entry.name, entry)
        return sorted(entries.values(), key=lambda entry: entry.name)

    @staticmethod
    def apply_overrides(
        config: ScenarioConfig,
        seed: Optional[int] = None,
        t_end: Optional[float] = None,
        dt: Optional[float] = None,
        out: Optional[str] = None,
    ) -> ScenarioConfig:
        data = config.model_dump()
        if seed is not None:
            data["numerics"]["seed"] = seed
        if t_end is not None:
            data["numerics"]["t_end"] = t_end
        if dt is not None:
            data["numerics"]["dt"] = dt
        if out is not None:
            data["output"]["directory"] = out
        return _validate(data, source="command line")

    @staticmethod
    def validate(config: ScenarioConfig) -> None:
        """Build the solver objects of a config without running it."""
        solver = config.scenario.solver
        if solver is Solver.HOMOGENEOUS:
            _build_homogeneous(config)
        elif solver is Solver.DISCRETE:
            _build_discrete(config.discrete)
        elif solver is Solver.SPATIAL:
            arena, _, params, _, _ = _build_spatial(config.spatial)
            try:
                CrowdService.check_cfl(arena, params, config.numerics.dt)
            except SimulationError as e:
                raise ConfigurationError(str(e), key="numerics.dt") from e
        else:
            _build_pair_rule(config.fpb)

    @staticmethod
    def simulate(config: ScenarioConfig) -> SimulationResult:
        solver = config.scenario.solver
        logger.info(f"Running scenario {config.scenario.name} with the {solver.value} solver")
        if solver is Solver.HOMOGENEOUS:
            return _simulate_homogeneous(config)
        if solver is Solver.DISCRETE:
            return _simulate_discrete(config)
        if solver is Solver.SPATIAL:
            return _simulate_spatial(config)
        return _simulate_fpb(config)

    @staticmethod
    def run(config: ScenarioConfig) -> RunReport:
        started = time.perf_counter()
        result = ScenarioService.simulate(config)
        wall_time = time.perf_counter() - started

        root = get_output_dir(config.output.directory)
        if config.output.directory is None:
            root = root / config.scenario.name
        with get_storage(root) as storage:
            storage.write_csv("timeseries.csv", result.timeseries.columns, result.timeseries.rows)
            storage.write_csv("final_state.csv", result.final_state.columns, result.final_state.rows)
            for name, table in result.extra_tables.items():
                storage.write_csv(name, table.columns, table.rows)
            manifest = storage.manifest()

        report = RunReport(
            scenario=config.scenario.name,
            solver=config.scenario.solver.value,
            wall_time=wall_time,
            steps=result.steps,
            conservation_drift=result.conservation_drift,
            clamp_events=result.diagnostics.clamp_events,
            clamp_mass=result.diagnostics.clamp_mass,
            output_dir=str(root),
            manifest=manifest,
            summary=result.summary,
        )
        (root / "report.json").write_text(report.model_dump_json(indent=2) + "\n")
        logger.info(f"Scenario {config.scenario.name} finished in {wall_time:.2f}s")
        return report

    @staticmethod
    def sweep(config: ScenarioConfig, param: str, values: list[float]) -> list[SweepPoint]:
        """Final over initial n_1 for each value of one parameter."""
        points = []
        for value in values:
            data = config.model_dump()
            _set_param(data, config.scenario.solver.value, param, value)
            result = ScenarioService.simulate(_validate(data, source=f"sweep {param}={value}"))
            rows = result.timeseries.rows
            if rows[0][1] <= 0:
                raise ConfigurationError("sweep needs a positive initial n_1", key="initial")
            points.append(SweepPoint(value=value, initial_density=rows[0][1], final_density=rows[-1][1]))
            logger.info(f"{param} = {value}: n_1 ratio {points[-1].ratio:.6g}")
        return points


def _parse(path: Path) -> dict:
    try:
        with open(path, "rb") as handle:
            return tomli.load(handle)
    except tomli.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        if line is None:
            match = re.search(r"line (\d+)", str(e))
            line = int(match.group(1)) if match else None
        raise ConfigurationError(f"{path}: parse error: {e}", line=line) from e


def _validate(data: dict, source: str) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or None
        where = f"{key}: " if key else ""
        raise ConfigurationError(f"{source}: {where}{first['msg']}", key=key) from e


def _set_param(data: dict, solver: str, param: str, value: float) -> None:
    if "." in param:
        path = param.split(".")
    else:
        candidates = [[solver, param], [solver, "model", param], ["numerics", param]]
        path = next((c for c in candidates if _has_path(data, c)), None)
        if path is None:
            raise ConfigurationError(f"unknown sweep parameter {param!r}", key=param)
    target = data
    for part in path[:-1]:
        if not isinstance(target.get(part), dict):
            raise ConfigurationError(f"unknown sweep parameter {param!r}", key=param)
        target = target[part]
    target[path[-1]] = value


def _has_path(data: dict, path: list[str]) -> bool:
    target = data
    for part in path[:-1]:
        target = target.get(part) if isinstance(target, dict) else None
    return isinstance(target, dict) and path[-1] in target


def _profile(profile: InitialProfile, grid: ActivityGrid) -> np.ndarray:
    u = grid.nodes
    if profile.shape == "uniform":
        raw = np.ones_like(u)
    elif profile.shape == "gaussian":
        raw = np.exp(-((u - profile.center) ** 2) / (2 * profile.width**2))
    else:
        raw = 1 + profile.slope * u
    if np.any(raw < 0) or raw @ grid.weights <= 0:
        raise ConfigurationError("initial profile must be nonnegative with positive mass", key="initial")
    return profile.density * raw / (raw @ grid.weights)


def _build_homogeneous(config: ScenarioConfig) -> tuple[InteractionModel, HomogeneousState]:
    section: HomogeneousSection = config.homogeneous
    grid = ActivityService.make_uniform_grid(section.lower, section.upper, config.numerics.grid_size)
    values = np.stack([_profile(profile, grid) for profile in section.initial])
    state = HomogeneousState(t=0.0, values=values, grid=grid)

    params = section.model.model_dump(exclude={"family"})
    family = section.model.family
    if family == "tumor_immune":
        if state.n_subsystems != 2:
            raise ConfigurationError("tumor_immune needs two subsystems (tumor, immune)", key="homogeneous.labels")
        ratio = params.pop("activation_ratio")
        if ratio is not None:
            params["kill"] = ratio * params["beta"]
    bundle = MODEL_FAMILIES[family](**params)
    model = InteractionModel.build(bundle, grid, state.n_subsystems)
    return model, state


def _simulate_homogeneous(config: ScenarioConfig) -> SimulationResult:
    model, state = _build_homogeneous(config)
    numerics = config.numerics
    diagnostics = IntegratorDiagnostics()
    interval = numerics.output_interval or numerics.dt
    final, trajectory = HomogeneousService.integrate(
        state,
        model,
        numerics.t_end,
        numerics.dt,
        interval,
        diagnostics,
        clamp=config.homogeneous.clamp,
    )
    moments = [ActivityService.moments(state)] + trajectory
    labels = config.homogeneous.labels
    final_rows = [[u, *final.values[:, j]] for j, u in enumerate(final.grid.nodes)]
    return SimulationResult(
        timeseries=_moment_table(moments, len(labels)),
        final_state=Table(columns=["u"] + [f"f_{i + 1}" for i in range(len(labels))], rows=final_rows),
        steps=diagnostics.steps,
        conservation_drift=_drift(moments) if model.is_conservative else None,
        diagnostics=diagnostics,
        summary=_density_ratios(moments),
    )


def _build_discrete(section: DiscreteSection) -> tuple[DiscreteModel, DiscreteState]:
    n, m = section.n, section.m
    shapes = {
        "eta": (n, m, n, m),
        "A": (n, m, n, m, n, m),
        "mu": (n, m, n),
        "M": (n, m, n, n, m),
        "P": (n, m, n, m),
        "D": (n, m, n, m),
    }
    tables = {}
    for name, shape in shapes.items():
        flat = getattr(section, name)
        if flat is None:
            continue
        if len(flat) != int(np.prod(shape)):
            raise ConfigurationError(
                f"table {name} needs {int(np.prod(shape))} entries for shape {shape}, got {len(flat)}",
                key=f"discrete.{name}",
            )
        tables[name] = np.array(flat, dtype=float).reshape(shape)
    model = DiscreteModel.build(n, m, nodes=section.nodes, **tables)
    return model, DiscreteState(t=0.0, f=section.initial)


def _simulate_discrete(config: ScenarioConfig) -> SimulationResult:
    model, state = _build_discrete(config.discrete)
    numerics = config.numerics
    diagnostics = IntegratorDiagnostics()
    final, trajectory = DiscreteService.integrate(
        state, model, numerics.t_end, numerics.dt, numerics.output_interval or numerics.dt, diagnostics
    )
    moments = [DiscreteService.moments(state, model)] + trajectory
    final_rows = [[j, model.nodes[j], *final.f[:, j]] for j in range(model.m)]
    return SimulationResult(
        timeseries=_moment_table(moments, model.n),
        final_state=Table(columns=["state", "u"] + [f"f_{i + 1}" for i in range(model.n)], rows=final_rows),
        steps=diagnostics.steps,
        conservation_drift=_drift(moments) if model.is_conservative else None,
        diagnostics=diagnostics,
        summary=_density_ratios(moments),
    )


def _build_spatial(section: SpatialSection):
    arena = CrowdService.load_arena(Path(section.arena), alpha=section.alpha)
    if section.closed:
        arena = arena.closed()
    params = CrowdParams(
        n_directions=section.n_directions,
        rho_jam=section.rho_jam,
        eta0=section.eta0,
        sharpness=section.sharpness,
        stencil_radius=section.stencil_radius,
    )
    weights = DecisionWeights(**section.weights.model_dump())
    sensory = section.sensory
    cfg = SensoryConfig(
        theta=sensory.theta,
        r_visibility=sensory.r_visibility,
        critical_count=sensory.critical_count,
        mode=SensoryMode(sensory.mode),
    )
    grid = ActivityService.make_uniform_grid(0.0, 1.0, section.activity_nodes)
    return arena, grid, params, weights, cfg


def _simulate_spatial(config: ScenarioConfig) -> SimulationResult:
    section = config.spatial
    numerics = config.numerics
    arena, grid, params, weights, cfg = _build_spatial(section)
    CrowdService.check_cfl(arena, params, numerics.dt)

    rows, cols = arena.shape
    first, last = section.initial_columns
    columns = np.arange(cols)
    density = np.zeros(arena.shape)
    density[:, (columns >= first) & (columns <= last)] = section.initial_density
    state = CrowdService.initial_state(arena, grid, density, params)
    target = CrowdService.target_field(arena)

    steps, every = march_plan(numerics.t_end, numerics.dt, numerics.output_interval)
    frame_every = max(1, int(round(section.frame_interval / numerics.dt))) if section.frame_interval else steps

    initial_mass = CrowdService.total_mass(state, arena)
    series = [_crowd_row(state, arena)]
    frames = {_frame_name(0): _frame(state)}
    worst = 0.0
    for step in tqdm(range(1, steps + 1), disable=not settings.SHOW_PROGRESS, desc="crowd"):
        state = CrowdService.step(state, arena, numerics.dt, weights, cfg, params, target)
        state = state.model_copy(update={"t": step * numerics.dt})
        balance = CrowdService.total_mass(state, arena) + state.evacuated
        worst = max(worst, abs(balance - initial_mass))
        if step % every == 0 or step == steps:
            series.append(_crowd_row(state, arena))
        if step % frame_every == 0 or step == steps:
            frames[_frame_name(step)] = _frame(state)

    return SimulationResult(
        timeseries=Table(columns=["t", "n_1", "E_1", "mass_inside", "evacuated"], rows=series),
        final_state=_frame(state),
        extra_tables=frames,
        steps=steps,
        conservation_drift=worst / initial_mass if initial_mass > 0 else 0.0,
        summary={
            "mass_inside": CrowdService.total_mass(state, arena),
            "evacuated": state.evacuated,
        },
    )


def _crowd_row(state, arena) -> list[float]:
    mass = CrowdService.total_mass(state, arena)
    return [state.t, mass, CrowdService.mean_activity(state), mass, state.evacuated]


def _frame_name(step: int) -> str:
    return f"frames/frame_{step:05d}.csv"


def _frame(state) -> Table:
    density = CrowdService.density_field(state)
    rows = [[r, c, density[r, c]] for r in range(density.shape[0]) for c in range(density.shape[1])]
    return Table(columns=["row", "col", "density"], rows=rows)


def _build_pair_rule(section: FpbSection) -> tuple[PairRule, Optional[EnvRule]]:
    noise = NoiseSpec(kind=NoiseKind(section.noise.kind), sigma2=section.noise.sigma2)
    domain = Interval(lower=section.lower, upper=section.upper)
    policy = AdmissibilityPolicy(section.policy)
    Q: Coefficient = proportional(section.q) if section.q_proportional else constant(section.q)
    try:
        rule = PairRule(P=constant(section.p), Q=Q, noise=noise, domain=domain, policy=policy)
        env_rule = None
        env = section.environment
        if env is not None and env.rate > 0:
            env_rule = EnvRule(
                P_E=constant(env.p_env),
                P=constant(env.p),
                Q=Q,
                noise=noise,
                domain=domain,
                policy=policy,
                environment=Environment(kind=env.kind, value=env.value, lower=env.lower, upper=env.upper),
            )
    except ValidationError as e:
        raise ConfigurationError(f"fpb rule: {e.errors()[0]['msg']}", key="fpb") from e
    return rule, env_rule


def _simulate_fpb(config: ScenarioConfig) -> SimulationResult:
    section = config.fpb
    numerics = config.numerics
    rule, env_rule = _build_pair_rule(section)
    rng = get_rng(numerics.seed)
    ensemble = MonteCarloService.uniform_ensemble(
        section.n_particles, section.initial_lower, section.initial_upper, rng, numerics.seed
    )
    steps, every = march_plan(numerics.t_end, numerics.dt, numerics.output_interval)
    mean0 = float(ensemble.values.mean())
    series = [_ensemble_row(ensemble)]
    for step in tqdm(range(1, steps + 1), disable=not settings.SHOW_PROGRESS, desc="monte carlo"):
        ensemble = MonteCarloService.mc_step(ensemble, rule, section.lam, numerics.dt, rng)
        if env_rule is not None:
            ensemble = MonteCarloService.mc_env_step(
                ensemble, env_rule, section.environment.rate, numerics.dt, rng
            )
        ensemble = ensemble.model_copy(update={"t": step * numerics.dt})
        if step % every == 0 or step == steps:
            series.append(_ensemble_row(ensemble))

    counts, edges = MonteCarloService.histogram(ensemble, section.histogram_bins)
    histogram = Table(
        columns=["left", "right", "count"],
        rows=[[edges[b], edges[b + 1], int(counts[b])] for b in range(len(counts))],
    )
    return SimulationResult(
        timeseries=Table(columns=["t", "n_1", "E_1", "variance"], rows=series),
        final_state=Table(columns=["particle", "value"], rows=[[k, v] for k, v in enumerate(ensemble.values)]),
        extra_tables={"histogram.csv": histogram},
        steps=steps,
        conservation_drift=abs(float(ensemble.values.mean()) - mean0),
        summary={"mean": float(ensemble.values.mean()), "variance": float(ensemble.values.var())},
    )


def _ensemble_row(ensemble) -> list[float]:
    return [
        ensemble.t,
        MonteCarloService.weak_observable(ensemble, lambda v: 1.0),
        MonteCarloService.weak_observable(ensemble, lambda v: v),
        float(np.var(ensemble.values)),
    ]


def _moment_table(moments: list[MomentSet], n: int) -> Table:
    return Table(
        columns=MomentSet.columns(n) + ["total_density"],
        rows=[[*row.row(), row.total()] for row in moments],
    )


def _drift(moments: list[MomentSet]) -> float:
    start = moments[0].total()
    if start == 0:
        return 0.0
    return max(abs(row.total() - start) for row in moments) / start


def _density_ratios(moments: list[MomentSet]) -> dict[str, float]:
    first, last = moments[0], moments[-1]
    return {
        f"n_{i + 1}_ratio": last.densities[i] / first.densities[i]
        for i in range(len(first.densities))
        if first.densities[i] > 0
    }
