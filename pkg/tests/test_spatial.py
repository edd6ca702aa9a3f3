import math

import numpy as np
import pytest

from kinetic.activity.service import ActivityService
from kinetic.config import settings
from kinetic.core.exceptions import ConfigurationError, SimulationError, UndefinedMomentError
from kinetic.domains.model import SensoryConfig
from kinetic.spatial.model import Arena, CellKind, CrowdParams, DecisionWeights, SpatialState
from kinetic.spatial.service import CrowdService

SENSORY = SensoryConfig(theta=math.pi / 2, r_visibility=2.0)


@pytest.fixture
def crowd_grid():
    return ActivityService.make_uniform_grid(0.0, 1.0, 3)


def packet(arena, grid, params, cell, direction, mass=1.0):
    f = np.zeros((params.n_directions, *arena.shape, grid.size))
    f[direction, cell[0], cell[1], :] = mass
    return SpatialState(t=0.0, f=f, grid=grid)


def test_load_arena(corridor):
    assert corridor.shape == (5, 12)
    assert corridor.cells[2, 11] == CellKind.EXIT
    assert corridor.cells[0, 5] == CellKind.WALL
    assert int(corridor.walkable.sum()) == 30
    assert int(corridor.exits.sum()) == 3


@pytest.mark.parametrize(
    "text, line",
    [
        ("3 two 1.0\n...\n", 1),
        ("3 2 1.0\n...\n", 1),
        ("3 2 1.0\n...\n..\n", 3),
        ("3 2 1.0\n...\n.x.\n", 3),
    ],
    ids=["header", "row-count", "width", "symbol"],
)
def test_load_arena_reports_line(tmp_path, text, line):
    path = tmp_path / "bad.map"
    path.write_text(text)
    with pytest.raises(ConfigurationError) as error:
        CrowdService.load_arena(path)
    assert error.value.line == line


def test_speed_closure():
    assert CrowdService.speed_closure(0.0, 0.8, 6.0) == 0.8
    assert CrowdService.speed_closure(3.0, 0.8, 6.0) == pytest.approx(0.4)
    assert CrowdService.speed_closure(9.0, 0.8, 6.0) == 0.0


def test_directions_are_exact_on_axes():
    directions = CrowdParams(n_directions=4).directions()
    assert directions.tolist() == [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
    with pytest.raises(ValueError):
        CrowdParams(n_directions=5)


def test_distance_and_target_field(corridor):
    distance = CrowdService.distance_to_exit(corridor)
    assert distance[2, 10] == pytest.approx(1.0)
    assert distance[2, 1] == pytest.approx(10.0)
    assert math.isinf(distance[0, 0])
    target = CrowdService.target_field(corridor, distance)
    assert target[2, 5].tolist() == [1.0, 0.0]
    assert target[0, 0].tolist() == [0.0, 0.0]


def test_no_corner_cutting(arena_file):
    arena = CrowdService.load_arena(arena_file(["####", "#.##", "##E#", "####"]))
    distance = CrowdService.distance_to_exit(arena)
    # the only way out squeezes diagonally between two walls
    assert math.isinf(distance[1, 1])
    assert CrowdService.target_field(arena, distance)[1, 1].tolist() == [0.0, 0.0]


def test_initial_state_spreads_over_directions(corridor, crowd_grid):
    params = CrowdParams()
    density = np.full(corridor.shape, 2.0)
    state = CrowdService.initial_state(corridor, crowd_grid, density, params)
    assert CrowdService.macro_density(state, (2, 3)) == pytest.approx(2.0)
    assert CrowdService.macro_density(state, (0, 3)) == 0.0
    assert CrowdService.total_mass(state, corridor) == pytest.approx(60.0)
    assert CrowdService.mean_activity(state) == pytest.approx(0.5)


def test_packet_moves_one_cell_per_step(corridor, crowd_grid):
    params = CrowdParams(n_directions=4, rho_jam=math.inf)
    state = packet(corridor, crowd_grid, params, (2, 1), 0)
    for _ in range(3):
        state = CrowdService.transport_step(state, corridor, params, 1.0)
    assert CrowdService.macro_density(state, (2, 4)) == pytest.approx(1.0)
    assert CrowdService.total_mass(state, corridor) == pytest.approx(1.0)
    assert state.evacuated == 0.0
    assert state.t == pytest.approx(3.0)


def test_packet_leaves_through_exit(corridor, crowd_grid):
    params = CrowdParams(n_directions=4, rho_jam=math.inf)
    state = packet(corridor, crowd_grid, params, (2, 1), 0)
    for _ in range(10):
        state = CrowdService.transport_step(state, corridor, params, 1.0)
    assert CrowdService.total_mass(state, corridor) == pytest.approx(0.0, abs=1e-14)
    assert state.evacuated == pytest.approx(1.0)


def test_wall_reflects_into_reverse_direction(corridor, crowd_grid):
    params = CrowdParams(n_directions=4, rho_jam=math.inf)
    state = packet(corridor, crowd_grid, params, (2, 1), 2)
    moved = CrowdService.transport_step(state, corridor, params, 1.0)
    assert moved.f[0, 2, 1] == pytest.approx(np.ones(3))
    assert moved.f[2].sum() == 0.0


def test_mean_velocity(corridor, crowd_grid):
    params = CrowdParams(n_directions=4, rho_jam=4.0)
    state = packet(corridor, crowd_grid, params, (2, 3), 1, mass=2.0)
    velocity = CrowdService.macro_mean_velocity(state, (2, 3), corridor, params)
    assert velocity == pytest.approx([0.0, 0.5])
    with pytest.raises(UndefinedMomentError):
        CrowdService.macro_mean_velocity(state, (2, 4), corridor, params)


def test_cfl_violation(corridor):
    with pytest.raises(SimulationError):
        CrowdService.check_cfl(corridor, CrowdParams(n_directions=8), 0.8)
    CrowdService.check_cfl(corridor, CrowdParams(n_directions=8), 0.7)


def test_relaxation_toward_fixed_law():
    kernel = np.array([[0.25, 0.75], [0.25, 0.75]])
    lam = 0.7
    relaxed = CrowdService.relax_directions(np.array([1.0, 0.0]), kernel, lam)
    decay = math.exp(-lam)
    assert relaxed == pytest.approx([0.25 + 0.75 * decay, 0.75 * (1 - decay)])


def test_decision_kernel_is_a_probability_law(corridor, crowd_grid):
    params = CrowdParams()
    density = np.zeros(corridor.shape)
    density[1:4, 2:6] = 3.0
    state = CrowdService.initial_state(corridor, crowd_grid, density, params)
    law = CrowdService.decision_kernel(corridor, state, (2, 4), 3, DecisionWeights(), SENSORY, params)
    assert law.shape == (8,)
    assert np.all(law >= 0)
    assert law.sum() == pytest.approx(1.0)

    target_only = DecisionWeights(target=1.0, vacuum=0.0, stream=0.0)
    law = CrowdService.decision_kernel(corridor, state, (2, 4), 3, target_only, SENSORY, params)
    assert int(np.argmax(law)) == 0


def test_decision_weights_shift_with_density_and_activity():
    weights = DecisionWeights(target=1.0, vacuum=1.0, stream=1.0, density_gain=1.0, activity_gain=1.0)
    target, vacuum, stream = weights.evaluate(1.0, 1.0)
    assert (target, vacuum, stream) == pytest.approx((0.2, 0.4, 0.4))


def test_collision_keeps_cell_mass_and_activity(corridor, crowd_grid):
    params = CrowdParams()
    density = np.zeros(corridor.shape)
    density[1:4, 2:8] = 2.5
    state = CrowdService.initial_state(
        corridor, crowd_grid, density, params, activity=lambda u: 1.0 + u
    )
    after = CrowdService.collision_step(state, corridor, 0.5, DecisionWeights(), SENSORY, params)
    assert CrowdService.density_field(after) == pytest.approx(CrowdService.density_field(state), abs=1e-12)
    per_activity = np.einsum("drcj->rcj", after.f)
    assert per_activity == pytest.approx(np.einsum("drcj->rcj", state.f), abs=1e-12)
    assert not np.allclose(after.f, state.f)


def test_mass_balance_with_exits(corridor, crowd_grid):
    params = CrowdParams()
    density = np.zeros(corridor.shape)
    density[1:4, 6:10] = 3.0
    state = CrowdService.initial_state(corridor, crowd_grid, density, params)
    start = CrowdService.total_mass(state, corridor)
    target = CrowdService.target_field(corridor)
    evacuated = [0.0]
    for _ in range(30):
        state = CrowdService.step(state, corridor, 0.5, DecisionWeights(), SENSORY, params, target)
        inside = CrowdService.total_mass(state, corridor)
        assert abs(inside + state.evacuated - start) <= 1e-10 * start
        evacuated.append(state.evacuated)
    assert evacuated[-1] > 0
    assert all(b >= a for a, b in zip(evacuated, evacuated[1:]))


def test_closed_arena_conserves_mass(corridor, crowd_grid):
    closed = corridor.closed()
    assert not closed.exits.any()
    params = CrowdParams()
    density = np.zeros(closed.shape)
    density[1:4, 1:5] = 4.0
    state = CrowdService.initial_state(closed, crowd_grid, density, params)
    start = CrowdService.total_mass(state, closed)
    for _ in range(40):
        state = CrowdService.step(state, closed, 0.5, DecisionWeights(), SENSORY, params)
    assert CrowdService.total_mass(state, closed) == pytest.approx(start, rel=1e-10)
    assert state.evacuated == 0.0


def test_arena_needs_walkable_cell():
    with pytest.raises(ValueError):
        Arena(cells=[[1, 1], [1, 2]])


def test_speed_closure_uses_configured_jam_density():
    assert CrowdService.speed_closure(0.0, 0.8) == 0.8
    assert CrowdService.speed_closure(settings.JAM_DENSITY, 0.8) == 0.0
    assert CrowdService.speed_closure(settings.JAM_DENSITY / 2, 0.8) == pytest.approx(0.4)


def test_vacuum_weight_rises_with_density_and_stream_with_activity():
    weights = DecisionWeights()
    _, vacuum, _ = weights.evaluate(np.linspace(0.0, 6.0, 7), 0.5)
    assert np.all(np.diff(vacuum) > 0)
    _, _, stream = weights.evaluate(1.0, np.linspace(0.0, 1.0, 6))
    assert np.all(np.diff(stream) > 0)
    with pytest.raises(ValueError):
        DecisionWeights(density_gain=0.0)


def test_empty_arena_heads_for_the_exit(corridor, crowd_grid):
    params = CrowdParams()
    state = CrowdService.initial_state(corridor, crowd_grid, np.zeros(corridor.shape), params)
    for d in range(params.n_directions):
        law = CrowdService.decision_kernel(corridor, state, (2, 4), d, DecisionWeights(), SENSORY, params)
        assert int(np.argmax(law)) == 0


def test_symmetric_crowd_gives_mirrored_law(corridor, crowd_grid):
    params = CrowdParams()
    density = np.zeros(corridor.shape)
    density[1:4, 2:6] = 3.0
    density[2, 3] = 4.0
    state = CrowdService.initial_state(corridor, crowd_grid, density, params)
    law = CrowdService.decision_kernel(corridor, state, (2, 4), 0, DecisionWeights(), SENSORY, params)
    # reflection y -> -y maps direction k to N_d - k
    mirrored = law[(-np.arange(params.n_directions)) % params.n_directions]
    assert law == pytest.approx(mirrored, abs=1e-12)


def gradient_neighbourhood(grid, params):
    """3 x 3 open block, density 1, 2, 3 left to right, everyone walking along +y."""
    arena = Arena.from_rows(["...", "...", "..."])
    f = np.zeros((params.n_directions, 3, 3, grid.size))
    for col in range(3):
        f[2, :, col, :] = col + 1.0
    target = np.zeros((3, 3, 2))
    target[..., 0] = 1.0
    return arena, SpatialState(t=0.0, f=f, grid=grid), target


def test_three_trend_law_by_hand(crowd_grid):
    params = CrowdParams()
    arena, state, target = gradient_neighbourhood(crowd_grid, params)
    weights = DecisionWeights(target=0.2, vacuum=0.5, stream=0.3)
    law = CrowdService.decision_kernel(arena, state, (1, 1), 2, weights, SENSORY, params, target=target)

    w_target, w_vacuum, w_stream = (float(w) for w in weights.evaluate(2.0, 0.5))
    # target +x, vacuum -x (density rises with x), stream +y
    preference = w_target * np.array([1.0, 0.0]) + w_vacuum * np.array([-1.0, 0.0]) + w_stream * np.array([0.0, 1.0])
    score = params.sharpness * params.directions() @ preference
    expected = np.exp(score - score.max())
    expected /= expected.sum()
    assert law == pytest.approx(expected, abs=1e-12)
    assert int(np.argmax(law)) == 3


def test_scaling_the_weights_keeps_the_law(crowd_grid):
    params = CrowdParams()
    arena, state, target = gradient_neighbourhood(crowd_grid, params)
    base = DecisionWeights(target=0.2, vacuum=0.5, stream=0.3)
    scaled = DecisionWeights(target=2.0, vacuum=5.0, stream=3.0)
    laws = [
        CrowdService.decision_kernel(arena, state, (1, 1), 2, weights, SENSORY, params, target=target)
        for weights in (base, scaled)
    ]
    assert laws[0] == pytest.approx(laws[1], abs=1e-12)
    assert int(np.argmax(laws[0])) == int(np.argmax(laws[1]))


def test_collision_relaxes_at_density_rate(crowd_grid):
    # two directions and a target-only law of (0.75, 0.25)
    params = CrowdParams(n_directions=2, eta0=0.5, sharpness=math.log(3.0) / 2)
    arena = Arena.from_rows(["."])
    f = np.zeros((2, 1, 1, crowd_grid.size))
    f[1] = 2.0
    state = SpatialState(t=0.0, f=f, grid=crowd_grid)
    target = np.array([[[1.0, 0.0]]])
    weights = DecisionWeights(target=1.0, vacuum=0.0, stream=0.0)

    dt = 0.3
    after = CrowdService.collision_step(state, arena, dt, weights, SENSORY, params, target)
    decay = math.exp(-params.eta0 * 2.0 * dt)
    assert after.f[0, 0, 0] == pytest.approx(np.full(crowd_grid.size, 2.0 * 0.75 * (1 - decay)), abs=1e-12)
    assert after.f[1, 0, 0] == pytest.approx(np.full(crowd_grid.size, 2.0 * (decay + 0.25 * (1 - decay))), abs=1e-12)

    unchanged = CrowdService.collision_step(state, arena, dt, weights, SENSORY, CrowdParams(n_directions=2, eta0=0.0), target)
    assert np.array_equal(unchanged.f, state.f)
