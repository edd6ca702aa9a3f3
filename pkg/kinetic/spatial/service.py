import logging
import math
from pathlib import Path
from typing import Callable, Optional

import networkx as nx
import numpy as np

from kinetic.activity.model import ActivityGrid
from kinetic.config import settings
from kinetic.core.exceptions import (
    ConfigurationError,
    SimulationError,
    UndefinedMomentError,
    UsageError,
)
from kinetic.domains.model import SensoryConfig
from kinetic.domains.service import DomainService
from kinetic.spatial.model import (
    CELL_SYMBOLS,
    Arena,
    CellKind,
    CrowdParams,
    DecisionWeights,
    SpatialState,
)

# Configure logger
logger = logging.getLogger(__name__)

NEIGHBOURS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]


class CrowdService:

    @staticmethod
    def load_arena(path: Path, alpha: float = 1.0) -> Arena:
        """Read a map: first line `cols rows dx`, then one symbol per cell."""
        lines = Path(path).read_text().splitlines()
        if not lines:
            raise ConfigurationError(f"arena file {path} is empty", line=1)
        try:
            cols, rows, dx = lines[0].split()
            cols, rows, dx = int(cols), int(rows), float(dx)
        except ValueError as e:
            raise ConfigurationError(
                f"arena header must read 'cols rows dx', got {lines[0]!r}", line=1
            ) from e

        body = [line.rstrip("\n") for line in lines[1:] if line.strip()]
        if len(body) != rows:
            raise ConfigurationError(f"arena declares {rows} rows but has {len(body)}", line=1)
        for number, row in enumerate(body, start=2):
            if len(row) != cols:
                raise ConfigurationError(f"row has {len(row)} cells, expected {cols}", line=number)
            unknown = set(row) - set(CELL_SYMBOLS)
            if unknown:
                raise ConfigurationError(f"unknown arena symbol {sorted(unknown)[0]!r}", line=number)
        return Arena.from_rows(body, dx=dx, alpha=alpha)

    @staticmethod
    def speed_closure(rho: float, alpha: float, rho_jam: float = settings.JAM_DENSITY) -> float:
        """Dimensionless walking speed; linear decay to zero at the jam density."""
        if rho < 0:
            raise UsageError(f"density must be nonnegative, got {rho}")
        return alpha * max(0.0, 1.0 - rho / rho_jam)

    @staticmethod
    def initial_state(
        arena: Arena,
        grid: ActivityGrid,
        density: np.ndarray,
        params: CrowdParams,
        activity: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        t: float = 0.0,
    ) -> SpatialState:
        """Spread a density field evenly over directions; activity profile normalized on the grid."""
        density = np.where(arena.walkable, np.asarray(density, dtype=float), 0.0)
        profile = np.ones(grid.size) if activity is None else np.asarray(activity(grid.nodes), dtype=float)
        profile = profile / (profile @ grid.weights)
        f = np.broadcast_to(
            density[None, :, :, None] * profile / params.n_directions,
            (params.n_directions, *arena.shape, grid.size),
        )
        return SpatialState(t=t, f=f, grid=grid)

    @staticmethod
    def density_field(state: SpatialState) -> np.ndarray:
        return np.einsum("drcj,j->rc", state.f, state.grid.weights)

    @staticmethod
    def macro_density(state: SpatialState, cell: tuple[int, int]) -> float:
        r, c = cell
        return float(np.sum(state.f[:, r, c, :] @ state.grid.weights))

    @staticmethod
    def macro_mean_velocity(
        state: SpatialState, cell: tuple[int, int], arena: Arena, params: CrowdParams
    ) -> np.ndarray:
        rho = CrowdService.macro_density(state, cell)
        if rho <= 0:
            raise UndefinedMomentError(f"mean velocity of empty cell {cell} is undefined")
        r, c = cell
        per_direction = state.f[:, r, c, :] @ state.grid.weights
        speed = CrowdService.speed_closure(rho, arena.alpha, params.rho_jam)
        return speed * (per_direction @ params.directions()) / rho

    @staticmethod
    def total_mass(state: SpatialState, arena: Arena) -> float:
        return float(CrowdService.density_field(state).sum() * arena.dx**2)

    @staticmethod
    def mean_activity(state: SpatialState) -> float:
        per_node = np.einsum("drcj->j", state.f) * state.grid.weights
        total = per_node.sum()
        return float(per_node @ state.grid.nodes / total) if total > 0 else math.nan

    @staticmethod
    def distance_to_exit(arena: Arena) -> np.ndarray:
        """Shortest walking distance to any exit; inf for walls and cut-off cells."""
        graph = _walk_graph(arena)
        exits = [tuple(cell) for cell in np.argwhere(arena.exits)]
        distance = np.full(arena.shape, np.inf)
        if not exits:
            return distance
        lengths = nx.multi_source_dijkstra_path_length(graph, exits, weight="weight")
        for (r, c), length in lengths.items():
            distance[r, c] = length
        return distance

    @staticmethod
    def target_field(arena: Arena, distance: Optional[np.ndarray] = None) -> np.ndarray:
        """Unit vector of the first step on a shortest path to an exit, shape (rows, cols, 2).

        Cells with no route to an exit get the zero vector.
        """
        if distance is None:
            distance = CrowdService.distance_to_exit(arena)
        rows, cols = arena.shape
        field = np.zeros((rows, cols, 2))
        for r, c in np.argwhere(arena.walkable):
            best, best_offset = math.inf, None
            for dr, dc in NEIGHBOURS:
                if not _can_step(arena, r, c, dr, dc) or distance[r + dr, c + dc] >= distance[r, c]:
                    continue
                cost = distance[r + dr, c + dc] + arena.dx * math.hypot(dr, dc)
                if cost < best - 1e-12:
                    best, best_offset = cost, (dc, dr)
            if best_offset is not None:
                field[r, c] = np.array(best_offset) / math.hypot(*best_offset)
        return field

    @staticmethod
    def check_cfl(arena: Arena, params: CrowdParams, dt: float) -> None:
        directions = params.directions()
        reach = np.max(np.abs(directions).sum(axis=1))
        if dt * arena.alpha * reach > arena.dx * (1 + 1e-12):
            raise SimulationError(
                f"CFL violated: dt * v_max * {reach:.3g} = {dt * arena.alpha * reach:.3g} exceeds dx = {arena.dx}"
            )

    @staticmethod
    def transport_step(state: SpatialState, arena: Arena, params: CrowdParams, dt: float) -> SpatialState:
        """First-order upwind advection along each direction.

        Flux into a wall or past the arena edge turns into the reverse
        direction in the source cell; flux into an exit leaves and is tallied.
        """
        CrowdService.check_cfl(arena, params, dt)
        f = state.f
        n_dir = params.n_directions
        rows, cols = arena.shape
        rho = CrowdService.density_field(state)
        speed = arena.alpha * np.maximum(0.0, 1.0 - rho / params.rho_jam)
        padded = np.pad(arena.cells, 1, constant_values=CellKind.WALL)

        new = np.array(f)
        evacuated = 0.0
        for d, (ex, ey) in enumerate(params.directions()):
            reverse = (d + n_dir // 2) % n_dir
            for component, (sy, sx) in ((ex, (0, int(np.sign(ex)))), (ey, (int(np.sign(ey)), 0))):
                if component == 0:
                    continue
                courant = dt * speed * abs(component) / arena.dx
                out = courant[:, :, None] * f[d]
                new[d] -= out

                dest = padded[1 + sy : 1 + sy + rows, 1 + sx : 1 + sx + cols]
                new[reverse] += out * (dest == CellKind.WALL)[:, :, None]
                evacuated += float(np.sum((out * (dest == CellKind.EXIT)[:, :, None]) @ state.grid.weights))

                moving = out * (dest == CellKind.WALKABLE)[:, :, None]
                buffer = np.zeros((rows + 2, cols + 2, state.grid.size))
                buffer[1 + sy : 1 + sy + rows, 1 + sx : 1 + sx + cols] += moving
                new[d] += buffer[1:-1, 1:-1]

        return SpatialState(
            t=state.t + dt,
            f=np.maximum(new, 0.0),
            grid=state.grid,
            evacuated=state.evacuated + evacuated * arena.dx**2,
        )

    @staticmethod
    def decision_kernel(
        arena: Arena,
        state: SpatialState,
        cell: tuple[int, int],
        d: int,
        weights: DecisionWeights,
        cfg: SensoryConfig,
        params: CrowdParams,
        u: Optional[float] = None,
        target: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """Probabilities over output directions for a candidate moving along e_d."""
        if not 0 <= d < params.n_directions:
            raise UsageError(f"direction {d} out of range for {params.n_directions} directions")
        if u is None:
            u = _cell_activity(state, cell)
        if target is None:
            target = CrowdService.target_field(arena)
        tables = _decision_tables(arena, state, weights, cfg, params, target, np.array([u]))
        r, c = cell
        return tables[d, r, c, 0]

    @staticmethod
    def relax_directions(f: np.ndarray, kernel: np.ndarray, lam) -> np.ndarray:
        """Exact solution over one step of df/dt = rate * (K f - f) with K column-stochastic.

        kernel[d_in, ..., d_out] holds the law for each incoming direction; lam
        broadcasts over the trailing axes of f.
        """
        redistributed = np.einsum("a...b,a...->b...", kernel, f)
        decay = np.exp(-np.asarray(lam))
        return decay * f + (1 - decay) * redistributed

    @staticmethod
    def collision_step(
        state: SpatialState,
        arena: Arena,
        dt: float,
        weights: DecisionWeights,
        cfg: SensoryConfig,
        params: CrowdParams,
        target: Optional[np.ndarray] = None,
    ) -> SpatialState:
        """Direction changes at rate eta0 * rho; cell mass and activity are unchanged."""
        if params.eta0 == 0:
            return state
        if target is None:
            target = CrowdService.target_field(arena)
        tables = _decision_tables(arena, state, weights, cfg, params, target, state.grid.nodes)
        rho = CrowdService.density_field(state)
        lam = (params.eta0 * rho * dt)[:, :, None]
        f = CrowdService.relax_directions(state.f, tables, lam)
        return SpatialState(t=state.t, f=np.maximum(f, 0.0), grid=state.grid, evacuated=state.evacuated)

    @staticmethod
    def step(
        state: SpatialState,
        arena: Arena,
        dt: float,
        weights: DecisionWeights,
        cfg: SensoryConfig,
        params: CrowdParams,
        target: Optional[np.ndarray] = None,
    ) -> SpatialState:
        moved = CrowdService.transport_step(state, arena, params, dt)
        return CrowdService.collision_step(moved, arena, dt, weights, cfg, params, target)


def _can_step(arena: Arena, r: int, c: int, dr: int, dc: int) -> bool:
    rows, cols = arena.shape
    r2, c2 = r + dr, c + dc
    if not (0 <= r2 < rows and 0 <= c2 < cols) or arena.cells[r2, c2] == CellKind.WALL:
        return False
    # no cutting corners past walls
    if dr and dc:
        return arena.cells[r + dr, c] != CellKind.WALL and arena.cells[r, c + dc] != CellKind.WALL
    return True


def _walk_graph(arena: Arena) -> nx.Graph:
    graph = nx.Graph()
    open_cells = [tuple(cell) for cell in np.argwhere(arena.cells != CellKind.WALL)]
    graph.add_nodes_from(open_cells)
    for r, c in open_cells:
        for dr, dc in NEIGHBOURS:
            if _can_step(arena, r, c, dr, dc):
                graph.add_edge((r, c), (r + dr, c + dc), weight=arena.dx * math.hypot(dr, dc))
    return graph


def _cell_activity(state: SpatialState, cell: tuple[int, int]) -> float:
    r, c = cell
    per_node = state.f[:, r, c, :].sum(axis=0) * state.grid.weights
    total = per_node.sum()
    if total <= 0:
        return 0.5 * (state.grid.lower + state.grid.upper)
    return float(per_node @ state.grid.nodes / total)


def _unit(vectors: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return np.where(norm > 1e-12, vectors / np.where(norm > 1e-12, norm, 1.0), 0.0)


def _vacuum_vectors(arena: Arena, rho: np.ndarray, cfg: SensoryConfig, params: CrowdParams):
    """Steepest density decrease seen in each direction's cone.

    Returns the unit vectors (N_d, rows, cols, 2) and the number of cells in
    each cone (N_d, rows, cols).
    """
    rows, cols = arena.shape
    reach = params.stencil_radius
    offsets = np.array(
        [(dc, dr) for dr in range(-reach, reach + 1) for dc in range(-reach, reach + 1) if (dr, dc) != (0, 0)],
        dtype=float,
    )
    radius = np.vectorize(lambda value: DomainService.interaction_radius(float(value), cfg))(rho)

    # neighbour density and visibility for every offset, shape (K, rows, cols)
    padded_rho = np.pad(rho, reach)
    padded_open = np.pad(arena.cells != CellKind.WALL, reach, constant_values=False)
    neighbour_rho = np.stack(
        [padded_rho[reach + int(oy) : reach + int(oy) + rows, reach + int(ox) : reach + int(ox) + cols] for ox, oy in offsets]
    )
    visible = np.stack(
        [padded_open[reach + int(oy) : reach + int(oy) + rows, reach + int(ox) : reach + int(ox) + cols] for ox, oy in offsets]
    )
    physical = offsets * arena.dx
    pull = physical / np.sum(physical**2, axis=1, keepdims=True)

    vacuum = np.zeros((params.n_directions, rows, cols, 2))
    counts = np.zeros((params.n_directions, rows, cols))
    for d, heading in enumerate(params.directions()):
        inside = DomainService.in_domain((0.0, 0.0), heading, physical[:, None, None, :], radius, cfg.theta)
        members = inside & visible
        contrast = np.where(members, neighbour_rho - rho, 0.0)
        vacuum[d] = -np.einsum("krc,kx->rcx", contrast, pull)
        counts[d] = members.sum(axis=0)
    return _unit(vacuum), counts


def _decision_tables(
    arena: Arena,
    state: SpatialState,
    weights: DecisionWeights,
    cfg: SensoryConfig,
    params: CrowdParams,
    target: np.ndarray,
    u_values: np.ndarray,
) -> np.ndarray:
    """Directional laws, shape (N_d in, rows, cols, len(u_values), N_d out)."""
    rho = CrowdService.density_field(state)
    directions = params.directions()
    vacuum, counts = _vacuum_vectors(arena, rho, cfg, params)
    heading = np.einsum("drcj,dx->rcx", state.f, directions)
    stream = _unit(heading)
    target = _unit(target)

    w_target, w_vacuum, w_stream = weights.evaluate(rho[:, :, None], u_values[None, None, :])
    preference = (
        w_target[None, :, :, :, None] * target[None, :, :, None, :]
        + w_vacuum[None, :, :, :, None] * vacuum[:, :, :, None, :]
        + w_stream[None, :, :, :, None] * stream[None, :, :, None, :]
    )
    # empty cone: pure target preference
    empty = (counts == 0)[:, :, :, None, None]
    preference = np.where(empty, target[None, :, :, None, :], preference)

    score = params.sharpness * np.einsum("drcux,ex->drcue", preference, directions)
    score -= score.max(axis=-1, keepdims=True)
    law = np.exp(score)
    return law / law.sum(axis=-1, keepdims=True)
