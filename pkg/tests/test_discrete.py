import math

import numpy as np
import pytest

from kinetic.activity.service import ActivityService
from kinetic.core.exceptions import ModelError, UsageError
from kinetic.discrete.model import DiscreteModel, DiscreteState, identity_transition
from kinetic.discrete.service import DiscreteService
from kinetic.homogeneous.kernels import Bump, Dirac, Uniform, tumor_immune_bundle
from kinetic.homogeneous.model import InteractionModel, KernelBundle
from kinetic.homogeneous.service import HomogeneousService


def oracle_rhs(f, model):
    """Plain loops over every index of the discrete structure."""
    n, m = f.shape
    E = [sum(f[k, j] * model.nodes[j] for j in range(m)) / sum(f[k]) for k in range(n)]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for p in range(n):
                for q in range(m):
                    for h in range(n):
                        for k in range(m):
                            out[i, j] += model.eta[p, q, h, k] * f[p, q] * f[h, k] * model.A[p, q, h, k, i, j]
                    for k in range(n):
                        out[i, j] += model.mu[p, q, k] * f[p, q] * E[k] * model.M[p, q, k, i, j]
            for h in range(n):
                for k in range(m):
                    out[i, j] -= f[i, j] * model.eta[i, j, h, k] * f[h, k]
                    out[i, j] += f[i, j] * model.eta[i, j, h, k] * (model.P[i, j, h, k] - model.D[i, j, h, k]) * f[h, k]
            for k in range(n):
                out[i, j] -= f[i, j] * model.mu[i, j, k] * E[k]
    return out


def random_model(rng, n=2, m=3, cross=True, macro=True, growth=True):
    A = rng.uniform(0.0, 1.0, (n, m, n, m, n, m))
    if not cross:
        for p in range(n):
            for i in range(n):
                if i != p:
                    A[p, :, :, :, i, :] = 0.0
    A /= A.sum(axis=(4, 5), keepdims=True)
    tables = dict(eta=rng.uniform(0.0, 1.0, (n, m, n, m)), A=A)
    if macro:
        M = rng.uniform(0.0, 1.0, (n, m, n, n, m))
        tables.update(mu=rng.uniform(0.0, 1.0, (n, m, n)), M=M / M.sum(axis=(3, 4), keepdims=True))
    if growth:
        tables.update(P=rng.uniform(0.0, 0.5, (n, m, n, m)), D=rng.uniform(0.0, 0.5, (n, m, n, m)))
    return DiscreteModel.build(n, m, nodes=np.linspace(0.0, 1.0, m), **tables)


def random_state(rng, n=2, m=3):
    return DiscreteState(t=0.0, f=rng.uniform(0.1, 1.0, (n, m)))


def test_rhs_matches_loop_oracle(rng):
    model = random_model(rng)
    state = random_state(rng)
    expected = oracle_rhs(np.array(state.f), model)
    assert DiscreteService.discrete_rhs(state, model) == pytest.approx(expected, abs=1e-13)


def test_two_state_toy_by_hand():
    A = np.array([1.0, 0.0, 0.4, 0.6, 0.2, 0.8, 0.0, 1.0]).reshape(1, 2, 1, 2, 1, 2)
    model = DiscreteModel.build(1, 2, nodes=[0.0, 1.0], eta=np.ones((1, 2, 1, 2)), A=A)
    rhs = DiscreteService.discrete_rhs(DiscreteState(t=0.0, f=[[0.9, 0.1]]), model)
    assert rhs == pytest.approx(np.array([[-0.036, 0.036]]), abs=1e-15)


def test_simple_form_agrees_with_general_form(rng):
    model = random_model(rng, cross=False, macro=False, growth=False)
    state = random_state(rng)
    assert DiscreteService.simple_rhs(state, model) == pytest.approx(
        DiscreteService.discrete_rhs(state, model), abs=1e-13
    )


def test_simple_form_rejects_cross_transitions(rng):
    state = random_state(rng)
    with pytest.raises(UsageError):
        DiscreteService.simple_rhs(state, random_model(rng, cross=True, macro=False, growth=False))
    with pytest.raises(UsageError):
        DiscreteService.simple_rhs(state, random_model(rng, cross=False, macro=True, growth=False))


def test_conservative_model_keeps_total_density(rng):
    model = random_model(rng, growth=False)
    state = random_state(rng)
    assert model.is_conservative
    assert DiscreteService.discrete_rhs(state, model).sum() == pytest.approx(0.0, abs=1e-13)

    start = DiscreteService.total_density(state)
    final, trajectory = DiscreteService.integrate(state, model, 5.0, 0.01, output_interval=1.0)
    assert len(trajectory) == 5
    assert DiscreteService.total_density(final) == pytest.approx(start, rel=1e-12)
    assert np.all(final.f >= 0)


def test_moments_use_node_values(rng):
    model = DiscreteModel.build(1, 3, nodes=[0.0, 0.25, 1.0])
    moments = DiscreteService.moments(DiscreteState(t=1.0, f=[[1.0, 2.0, 1.0]]), model)
    assert moments.densities == [4.0]
    assert moments.activations == [pytest.approx(0.375)]


def test_density_scaling_multiplies_rates(rng):
    base = random_model(rng, macro=False, growth=False)
    scaled = DiscreteModel.build(
        base.n, base.m, nodes=base.nodes, eta=base.eta, A=base.A, density_scaling=lambda f: 2.5
    )
    state = random_state(rng)
    assert DiscreteService.discrete_rhs(state, scaled) == pytest.approx(
        2.5 * DiscreteService.discrete_rhs(state, base), abs=1e-13
    )


def test_default_tables_are_identity_and_zero():
    model = DiscreteModel.build(2, 3)
    assert np.array_equal(model.A, identity_transition(2, 3))
    assert model.nodes.tolist() == [0.0, 0.5, 1.0]
    state = DiscreteState(t=0.0, f=np.ones((2, 3)))
    assert np.all(DiscreteService.discrete_rhs(state, model) == 0.0)


def test_build_rejects_bad_tables(rng):
    A = identity_transition(1, 2)
    A[0, 0, 0, 0, 0, 1] = 0.5
    with pytest.raises(ModelError):
        DiscreteModel.build(1, 2, A=A)
    with pytest.raises(ModelError):
        DiscreteModel.build(1, 2, eta=-np.ones((1, 2, 1, 2)))
    with pytest.raises(ModelError):
        DiscreteModel.build(1, 2, eta=np.ones((2, 2)))
    with pytest.raises(ModelError):
        DiscreteModel.build(1, 2, nodes=[-1.0, 1.0], mu=np.ones((1, 2, 1)))


def test_state_shape_must_match_model(rng):
    with pytest.raises(UsageError):
        DiscreteService.discrete_rhs(DiscreteState(t=0.0, f=np.ones((1, 3))), random_model(rng))


def test_induced_model_reproduces_homogeneous_rhs():
    grid = ActivityService.make_uniform_grid(0.0, 1.0, 7)
    bundle = KernelBundle(
        eta={(0, 0): 1.0, (0, 1): lambda u, v: 0.5 + v, (1, 1): 0.7},
        A={(0, 0, 0): Bump(width=0.2, attraction=0.4), (0, 1, 1): Uniform()},
        mu={(1, 0): 0.8},
        M={(1, 0, 1): Bump(width=0.1, attraction=1.0)},
        P={(0, 1): Dirac(mass=0.3)},
        D={(0, 1): lambda u, v: 0.2 * u},
    )
    model = InteractionModel.build(bundle, grid, 2)
    state = ActivityService.sample(grid, 2, lambda i, u: 1.0 + (i + 1) * u**2)
    discrete = DiscreteService.induced_model(model, state)
    induced_state = DiscreteState(t=0.0, f=state.values * grid.weights)

    expected = HomogeneousService.rhs(state, model) * grid.weights
    assert DiscreteService.discrete_rhs(induced_state, discrete) == pytest.approx(expected, abs=1e-12)


def test_induced_model_rejects_activity_drift():
    grid = ActivityService.make_uniform_grid(0.0, 1.0, 7)
    model = InteractionModel.build(tumor_immune_bundle(beta=1.0, kill=1.0, relaxation=0.5), grid, 2)
    state = ActivityService.sample(grid, 2, lambda i, u: np.ones_like(u))
    with pytest.raises(UsageError):
        DiscreteService.induced_model(model, state)


def test_continuum_consistency_is_exact_for_constant_kernels():
    bundle = KernelBundle(eta={(0, 0): 1.0}, A={(0, 0, 0): Uniform()})
    errors = DiscreteService.continuum_consistency(
        bundle, 1, [5, 9], lambda i, u: np.ones_like(u), t_end=0.5, dt=0.05, m_ref=17
    )
    assert len(errors) == 2
    assert max(errors) <= 1e-10


def test_empirical_orders():
    assert DiscreteService.empirical_orders([4e-2, 1e-2, 2.5e-3], [11, 21, 41]) == pytest.approx([2.0, 2.0])
    orders = DiscreteService.empirical_orders([1e-3, 0.0], [11, 21])
    assert orders == [math.inf]


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(100))
def test_random_instances_match_loop_oracle(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    n, m = int(rng.integers(1, 4)), int(rng.integers(2, 10))
    model = random_model(rng, n, m)
    state = random_state(rng, n, m)
    expected = oracle_rhs(np.array(state.f), model)
    actual = DiscreteService.discrete_rhs(state, model)
    assert np.max(np.abs(actual - expected)) <= 1e-12 * max(1.0, np.max(np.abs(expected)))


def test_equilibrium_is_kept_by_rk4():
    A = np.array([1.0, 0.0, 0.4, 0.6, 0.2, 0.8, 0.0, 1.0]).reshape(1, 2, 1, 2, 1, 2)
    model = DiscreteModel.build(1, 2, nodes=[0.0, 1.0], eta=np.ones((1, 2, 1, 2)), A=A)
    # everyone in the absorbing state
    state = DiscreteState(t=0.0, f=[[0.0, 0.7]])
    assert np.all(DiscreteService.discrete_rhs(state, model) == 0.0)

    after = DiscreteService.step_rk4(state, model, 0.1)
    assert after.t == pytest.approx(0.1)
    assert after.f == pytest.approx(state.f, abs=1e-15)
