import math

import numpy as np
import pytest
from scipy import stats

from errors import DomainError, ModelInconsistencyError, NotPositiveRecurrentError
from pdmp import (
    EmpiricalDistribution,
    JumpEvent,
    apply_jump,
    generator_residual,
    sample_stationary,
    simulate_trajectory,
)
from rates import ConstantRate, RateModel, TwoTermRate, UniformKernel
from utils.observables import PowerObservable


def _violated_model():
    return RateModel(tau=TwoTermRate(c1=1.0, p1=0.0, c2=1.0, p2=2.0), beta=ConstantRate(c=1.0))


# Jumps


def test_apply_jump():
    assert apply_jump(4.0, 0.5) == 2.0
    assert apply_jump(1e200, 1e-150) == pytest.approx(1e50, rel=1e-12)
    assert apply_jump(1e-200, 1e-100) == pytest.approx(1e-300, rel=1e-12)


def test_apply_jump_out_of_range():
    with pytest.raises(ModelInconsistencyError):
        apply_jump(1e-300, 1e-300)


def test_jump_event_post_size():
    assert JumpEvent(t=1.0, x_pre=3.0, y=0.25).x_post == 0.75


# Trajectories


def test_trajectory_structure(tcp_model, tcp_kernel):
    path = simulate_trajectory(tcp_model, tcp_kernel, 1.0, 50.0, np.random.default_rng(3))
    times = path.jump_times
    assert len(times) > 10
    assert all(0 < t <= 50.0 for t in times)
    assert times == sorted(times)
    # tau = 1 between jumps, halving at each jump
    previous_t, previous_x = 0.0, 1.0
    for event in path.events:
        assert event.x_pre == pytest.approx(previous_x + (event.t - previous_t), rel=1e-12)
        assert event.x_post == pytest.approx(event.x_pre / 2.0)
        previous_t, previous_x = event.t, event.x_post
    assert path.value_at(times[0]) == pytest.approx(path.events[0].x_post)
    assert path.value_at(0.0) == 1.0


def test_trajectory_rows_respect_span(tcp_model, tcp_kernel):
    path = simulate_trajectory(tcp_model, tcp_kernel, 1.0, 50.0, np.random.default_rng(3))
    rows = path.rows(span=10.0)
    assert rows and all(t <= 10.0 for t, *_ in rows)
    assert len(path.rows()) == len(path.events)


def test_trajectory_domain_errors(tcp_model, tcp_kernel):
    with pytest.raises(DomainError):
        simulate_trajectory(tcp_model, tcp_kernel, 0.0, 10.0, np.random.default_rng(0))
    path = simulate_trajectory(tcp_model, tcp_kernel, 1.0, 5.0, np.random.default_rng(0))
    with pytest.raises(DomainError):
        path.value_at(6.0)


def test_jump_counts_are_poisson_for_constant_rate(gamma_model, uniform_kernel):
    path = simulate_trajectory(gamma_model, uniform_kernel, 1.0, 5000.0, np.random.default_rng(17))
    counts = np.bincount(np.floor(path.jump_times).astype(int), minlength=5000)[:5000]
    observed = np.array([np.sum(counts == k) for k in range(4)] + [np.sum(counts >= 4)])
    probs = np.append(stats.poisson.pmf(np.arange(4), 1.0), stats.poisson.sf(3, 1.0))
    assert stats.chisquare(observed, probs * counts.size).pvalue > 1e-3
    assert counts.mean() == pytest.approx(1.0, abs=0.05)


# Empirical distributions


def test_empirical_distribution_validation():
    with pytest.raises(ValueError):
        EmpiricalDistribution.from_samples([1.0, -1.0])
    with pytest.raises(ValueError):
        EmpiricalDistribution(samples=np.array([1.0, 2.0]), weights=np.array([0.5, 0.6]))
    dist = EmpiricalDistribution.from_samples([1.0, 2.0, 3.0, 4.0])
    assert dist.count == 4
    assert dist.mean(lambda x: x) == pytest.approx(2.5)
    edges, mass = dist.histogram(bins=4)
    assert mass.sum() == pytest.approx(1.0)
    assert edges[0] == 1.0


# Stationary sampling


def test_sampling_is_deterministic_across_workers(tcp_model, tcp_kernel):
    kwargs = dict(horizon=200.0, seed=42, burn_in=20.0, stride=0.5, n_chains=3)
    serial = sample_stationary(tcp_model, tcp_kernel, max_workers=1, **kwargs)
    parallel = sample_stationary(tcp_model, tcp_kernel, max_workers=2, **kwargs)
    np.testing.assert_array_equal(serial.samples, parallel.samples)
    assert serial.count == 3 * 361
    assert serial.provenance.n_chains == 3


def test_chain_does_not_depend_on_chain_count(tcp_model, tcp_kernel):
    kwargs = dict(horizon=100.0, seed=7, burn_in=10.0, stride=1.0, max_workers=1)
    two = sample_stationary(tcp_model, tcp_kernel, n_chains=2, **kwargs)
    four = sample_stationary(tcp_model, tcp_kernel, n_chains=4, **kwargs)
    np.testing.assert_array_equal(two.samples, four.samples[: two.count])


def test_default_stride_comes_from_pilot(tcp_model, tcp_kernel):
    dist = sample_stationary(tcp_model, tcp_kernel, horizon=100.0, seed=1, n_chains=1)
    assert dist.provenance.burn_in == 20.0
    assert 0.1 < dist.provenance.stride < 2.0


def test_burn_in_must_be_below_horizon(tcp_model, tcp_kernel):
    with pytest.raises(DomainError):
        sample_stationary(tcp_model, tcp_kernel, horizon=10.0, seed=0, burn_in=10.0, n_chains=1)


def test_refuses_models_that_are_not_positive_recurrent():
    with pytest.raises(NotPositiveRecurrentError) as exc_info:
        sample_stationary(_violated_model(), UniformKernel(), horizon=10.0, seed=0, n_chains=1)
    assert exc_info.value.condition == "balance at ∞"


def test_tcp_second_moment(tcp_model, tcp_kernel):
    dist = sample_stationary(
        tcp_model, tcp_kernel, horizon=4000.0, seed=20240601, burn_in=100.0, n_chains=4, max_workers=1
    )
    assert dist.mean(lambda x: x**2) == pytest.approx(2.0, abs=0.15)


def test_gamma_mean(gamma_model, uniform_kernel):
    dist = sample_stationary(
        gamma_model, uniform_kernel, horizon=4000.0, seed=3, burn_in=100.0, n_chains=4, max_workers=1
    )
    assert dist.mean(lambda x: x) == pytest.approx(2.0, abs=0.15)


@pytest.mark.slow
def test_tcp_second_moment_at_scale(tcp_model, tcp_kernel):
    dist = sample_stationary(tcp_model, tcp_kernel, horizon=20000.0, seed=20240601, burn_in=200.0, n_chains=50)
    assert abs(dist.mean(lambda x: x**2) - 2.0) < 0.02


def test_l1_distance_between_histograms():
    rng = np.random.default_rng(5)
    near = EmpiricalDistribution.from_samples(rng.uniform(1.0, 2.0, size=1000))
    far = EmpiricalDistribution.from_samples(rng.uniform(5.0, 6.0, size=1000))
    assert near.l1_distance(near) == 0.0
    assert near.l1_distance(far) == pytest.approx(2.0)
    assert far.l1_distance(near) == pytest.approx(2.0)


@pytest.mark.slow
def test_independent_seeds_agree(tcp_model, tcp_kernel):
    kwargs = dict(horizon=20000.0, burn_in=200.0, n_chains=50)
    first = sample_stationary(tcp_model, tcp_kernel, seed=1, **kwargs)
    second = sample_stationary(tcp_model, tcp_kernel, seed=2, **kwargs)
    assert first.l1_distance(second) < 0.03


# Generator residual


def test_generator_residual_is_unbiased(tcp_model, tcp_kernel):
    estimate, stderr = generator_residual(
        tcp_model, tcp_kernel, PowerObservable(1.0), 1.0, h=1e-3, n=200_000, rng=np.random.default_rng(8)
    )
    assert math.isfinite(stderr) and stderr > 0
    assert abs(estimate) < 4.0 * stderr


@pytest.mark.slow
def test_generator_residual_at_scale(tcp_model, tcp_kernel):
    for x in (0.5, 1.0, 3.0):
        estimate, stderr = generator_residual(
            tcp_model, tcp_kernel, PowerObservable(2.0), x, n=1_000_000, rng=np.random.default_rng(int(10 * x))
        )
        assert abs(estimate) < 4.0 * stderr
