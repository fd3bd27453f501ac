import math

import numpy as np
import pytest

from errors import CFLViolationError, ConvergenceError, DomainError, NotPositiveRecurrentError
from pde import (
    DensityField,
    GrowthFragmentationSolver,
    SizeGrid,
    compare_distributions,
    gain_weights,
    initial_field,
    steady_state,
    step_conservative,
)
from pdmp import EmpiricalDistribution, sample_stationary
from rates import ConstantRate, PointMassKernel, RateModel, TwoTermRate


@pytest.fixture(scope="module")
def tcp_steady(tcp_model, tcp_kernel):
    field, history = steady_state(tcp_model, tcp_kernel, SizeGrid.dyadic(1e-2, 16.0, 32))
    return field, history


@pytest.fixture(scope="module")
def gamma_steady(gamma_model, uniform_kernel):
    field, _ = steady_state(gamma_model, uniform_kernel, SizeGrid.log_spaced(1e-4, 60.0, 400))
    return field


def _run(solver, field, t_end):
    steps = int(math.ceil(t_end / solver.max_dt))
    dt = t_end / steps
    for _ in range(steps):
        field = solver.step(field, dt)
    return field


# Grids and fields


def test_dyadic_grid_halves_onto_centers():
    grid = SizeGrid.dyadic(1e-3, 30.0, 8)
    assert grid.size == 119
    assert grid.x_min == 1e-3
    assert grid.x_max >= 30.0
    np.testing.assert_allclose(grid.centers[8:] / 2.0, grid.centers[:-8], rtol=1e-12)


def test_log_spaced_grid():
    grid = SizeGrid.log_spaced(1e-3, 30.0, 2000)
    assert grid.size == 2000
    assert grid.x_max == pytest.approx(30.0)
    ratios = grid.edges[1:] / grid.edges[:-1]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-10)


def test_grid_validation():
    with pytest.raises(ValueError):
        SizeGrid(edges=np.array([1.0, 0.5, 2.0]))
    with pytest.raises(ValueError):
        SizeGrid(edges=np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        SizeGrid(edges=np.array([0.0, 1.0, 2.0]))


def test_field_validation_and_masses():
    grid = SizeGrid.log_spaced(0.1, 10.0, 20)
    with pytest.raises(ValueError):
        DensityField(grid=grid, values=-np.ones(20))
    with pytest.raises(ValueError):
        DensityField(grid=grid, values=np.ones(19))
    field = initial_field(grid)
    assert field.mass() == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(field.mass_on(grid.edges), field.values * grid.widths, rtol=1e-12, atol=1e-15)
    assert len(field.rows()) == 20


# Gain operator


def test_uniform_gain_rows_sum_to_one(uniform_kernel):
    grid = SizeGrid.log_spaced(1e-2, 10.0, 60)
    W, lost = gain_weights(uniform_kernel, grid)
    np.testing.assert_allclose(W.sum(axis=1) + lost, 1.0, rtol=1e-12)
    assert np.all(W >= 0)
    np.testing.assert_allclose(lost, grid.x_min / grid.centers, rtol=1e-12)


def test_point_mass_gain_lands_on_centers(tcp_kernel):
    grid = SizeGrid.dyadic(1e-2, 10.0, 8)
    W, lost = gain_weights(tcp_kernel, grid)
    assert np.all(lost[:8] == 1.0)
    assert np.all(lost[8:] == 0.0)
    for k in range(8, grid.size):
        assert W[k, k - 8] == pytest.approx(1.0, abs=1e-9)


def test_point_mass_gain_splits_between_centers():
    grid = SizeGrid.log_spaced(1e-2, 10.0, 50)
    W, lost = gain_weights(PointMassKernel(r=0.3), grid)
    np.testing.assert_allclose(W.sum(axis=1) + lost, 1.0, rtol=1e-12)
    k = grid.size - 1
    target = 0.3 * grid.centers[k]
    assert np.dot(W[k], np.log(grid.centers)) == pytest.approx(math.log(target), rel=1e-12)


# Explicit steps


def test_step_rejects_unstable_dt(gamma_model, uniform_kernel):
    grid = SizeGrid.log_spaced(1e-2, 20.0, 100)
    solver = GrowthFragmentationSolver(gamma_model, uniform_kernel, grid)
    with pytest.raises(CFLViolationError) as exc_info:
        solver.step(initial_field(grid), 2.0 * solver.max_dt)
    assert exc_info.value.max_dt == solver.max_dt
    with pytest.raises(CFLViolationError):
        step_conservative(initial_field(grid), gamma_model, uniform_kernel, 2.0 * solver.max_dt)


def test_step_conserves_mass_up_to_leakage(gamma_model, uniform_kernel):
    grid = SizeGrid.log_spaced(1e-2, 20.0, 200)
    field = initial_field(grid)
    solver = GrowthFragmentationSolver(gamma_model, uniform_kernel, grid)
    stepped = step_conservative(field, gamma_model, uniform_kernel, solver.max_dt)
    assert stepped.mass() + stepped.leaked == pytest.approx(field.mass(), rel=1e-12)
    assert stepped.leaked > 0
    assert stepped.time == pytest.approx(solver.max_dt)
    later = _run(solver, field, 5.0)
    assert later.mass() + later.leaked == pytest.approx(1.0, rel=1e-10)


def test_closed_solver_has_no_net_source(gamma_model, uniform_kernel):
    grid = SizeGrid.log_spaced(1e-2, 20.0, 200)
    u = initial_field(grid).values
    closed = GrowthFragmentationSolver(gamma_model, uniform_kernel, grid, closed=True)
    assert abs(np.dot(closed.rhs(u), grid.widths)) < 1e-12
    assert closed.leak_rate(u) == 0.0
    open_ = GrowthFragmentationSolver(gamma_model, uniform_kernel, grid)
    assert np.dot(open_.rhs(u), grid.widths) == pytest.approx(-open_.leak_rate(u), rel=1e-9)


def test_pure_transport_moves_the_bump(uniform_kernel):
    model = RateModel(tau=ConstantRate(c=1.0), beta=ConstantRate(c=1e-12))
    grid = SizeGrid.log_spaced(1.0, 100.0, 500)
    bump = np.exp(-0.5 * ((grid.centers - 10.0) / 0.5) ** 2)
    field = DensityField(grid=grid, values=bump).normalized()
    start = field.moment(lambda x: x)
    moved = _run(GrowthFragmentationSolver(model, uniform_kernel, grid), field, 1.0)
    assert moved.moment(lambda x: x) / moved.mass() - start == pytest.approx(1.0, abs=0.05)
    assert moved.mass() == pytest.approx(1.0, rel=1e-9)


def test_tcp_mass_over_time(tcp_model, tcp_kernel):
    grid = SizeGrid.dyadic(1e-2, 30.0, 4)
    solver = GrowthFragmentationSolver(tcp_model, tcp_kernel, grid)
    field = _run(solver, initial_field(grid), 50.0)
    assert field.time == pytest.approx(50.0)
    # fragments of the lowest octave fall below x_min
    assert field.mass() == pytest.approx(1.0, abs=1e-2)
    assert field.leaked > 0
    assert field.mass() + field.leaked == pytest.approx(1.0, abs=1e-9)


# Steady states


def test_tcp_steady_second_moment(tcp_steady):
    field, history = tcp_steady
    assert history[-1] < 1e-8
    assert field.mass() == pytest.approx(1.0, rel=1e-12)
    assert field.moment(lambda x: x**2) == pytest.approx(2.0, abs=0.03)


def test_gamma_steady_profile(gamma_steady):
    assert gamma_steady.moment(lambda x: x) == pytest.approx(2.0, abs=0.1)
    centers = gamma_steady.grid.centers
    window = (centers > 1e-3) & (centers < 1e-2)
    slope = np.polyfit(np.log(centers[window]), np.log(gamma_steady.values[window]), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.15)


def test_infinite_tolerance_returns_initial(tcp_model, tcp_kernel):
    grid = SizeGrid.dyadic(1e-2, 10.0, 4)
    start = initial_field(grid)
    field, history = steady_state(tcp_model, tcp_kernel, grid, tol=math.inf, initial=start)
    assert field is start
    assert history == []


def test_convergence_failure_carries_history(gamma_model, uniform_kernel):
    grid = SizeGrid.log_spaced(1e-2, 20.0, 50)
    with pytest.raises(ConvergenceError) as exc_info:
        steady_state(gamma_model, uniform_kernel, grid, tol=1e-14, max_steps=5, check_every=1)
    assert len(exc_info.value.residual_history) == 5


def test_steady_state_refuses_transient_models(uniform_kernel):
    model = RateModel(tau=TwoTermRate(c1=1.0, p1=0.0, c2=1.0, p2=2.0), beta=ConstantRate(c=1.0))
    with pytest.raises(NotPositiveRecurrentError):
        steady_state(model, uniform_kernel, SizeGrid.log_spaced(1e-2, 20.0, 50))


def test_global_marching_reaches_the_same_profile(gamma_model, uniform_kernel):
    grid = SizeGrid.log_spaced(0.05, 20.0, 60)
    local, _ = steady_state(gamma_model, uniform_kernel, grid, tol=1e-9)
    physical, _ = steady_state(gamma_model, uniform_kernel, grid, tol=1e-9, marching="global")
    np.testing.assert_allclose(physical.values, local.values, rtol=1e-4, atol=1e-6)


@pytest.mark.slow
def test_tcp_steady_state_refines(tcp_model, tcp_kernel):
    errors = []
    for per_octave in (32, 64, 128):
        field, _ = steady_state(tcp_model, tcp_kernel, SizeGrid.dyadic(1e-3, 30.0, per_octave))
        errors.append(abs(field.moment(lambda x: x**2) - 2.0))
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 0.01


# Cross-validation


def test_self_comparison_is_small():
    grid = SizeGrid.log_spaced(1e-2, 50.0, 300)
    field = initial_field(grid)
    dist = EmpiricalDistribution.from_samples(field.sample(1_000_000, np.random.default_rng(12)))
    assert compare_distributions(field, dist, 1e-2, 10.0) < 0.02


def test_gamma_steady_state_matches_exact_law(gamma_steady):
    samples = np.random.default_rng(31).gamma(2.0, 1.0, size=1_000_000)
    distance = compare_distributions(gamma_steady, EmpiricalDistribution.from_samples(samples), 1e-2, 10.0)
    assert distance < 0.05


def test_mismatched_models_are_far_apart(tcp_steady):
    field, _ = tcp_steady
    samples = np.random.default_rng(32).gamma(2.0, 1.0, size=200_000)
    assert compare_distributions(field, EmpiricalDistribution.from_samples(samples), 1e-2, 10.0) > 0.2


def test_disjoint_supports_are_rejected():
    field = initial_field(SizeGrid.log_spaced(1e-3, 1.0, 50))
    dist = EmpiricalDistribution.from_samples(np.random.default_rng(0).uniform(5.0, 10.0, size=100))
    with pytest.raises(DomainError):
        compare_distributions(field, dist)


def test_explicit_zero_bounds_are_honored():
    field = initial_field(SizeGrid.log_spaced(1e-2, 50.0, 300))
    dist = EmpiricalDistribution.from_samples(field.sample(100_000, np.random.default_rng(13)))
    assert compare_distributions(field, dist, x_lo=0.0) == compare_distributions(field, dist)
    with pytest.raises(DomainError):
        compare_distributions(field, dist, x_hi=0.0)


@pytest.mark.slow
def test_tcp_steady_state_matches_simulation(tcp_model, tcp_kernel):
    field, _ = steady_state(tcp_model, tcp_kernel, SizeGrid.dyadic(1e-3, 30.0, 64))
    dist = sample_stationary(tcp_model, tcp_kernel, horizon=20000.0, seed=20240601, burn_in=200.0, n_chains=50)
    assert compare_distributions(field, dist, 1e-2, 10.0) < 0.05
