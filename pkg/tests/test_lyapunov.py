import math

import numpy as np
import pytest

from errors import DivergentIntegralError, DomainError, NotPositiveRecurrentError
from lyapunov import (
    LyapunovSpec,
    LyapunovV,
    apply_generator,
    build_spec,
    check_bound_v,
    classify_balance,
    drift_report,
    drift_V,
    drift_Vtilde,
    generator_values,
    require_positive_recurrent,
    select_exponents,
    vtilde_profile,
)
from rates import BetaShapeKernel, ConstantRate, PointMassKernel, PowerRate, RateModel, TwoTermRate, UniformKernel
from utils.observables import ExpTiltObservable, LogObservable, PowerObservable


def _model(tau, beta):
    return RateModel(tau=tau, beta=beta)


def _power(p, c=1.0):
    return PowerRate(c=c, p=p)


def _sum(c1, p1, c2, p2):
    return TwoTermRate(c1=c1, p1=p1, c2=c2, p2=p2)


DRIFT_MODELS = {
    "tcp": _model(ConstantRate(c=1.0), _power(1.0)),
    "gamma": _model(ConstantRate(c=1.0), ConstantRate(c=1.0)),
    "sqrt": _model(_power(0.5), _power(1.5, c=2.0)),
}

DRIFT_KERNELS = {
    "uniform": UniformKernel(),
    "beta11": BetaShapeKernel(mu0=1.0, mu1=1.0),
    "half": PointMassKernel(r=0.5),
}


# The Lyapunov function


def test_v_is_continuous_and_positive():
    V = LyapunovV(a=3.0, b=0.75)
    for x in (1.0, 2.0):
        below, above = V.value(x * (1 - 1e-9)), V.value(x * (1 + 1e-9))
        assert below == pytest.approx(above, rel=1e-6)
        assert V.derivative(x * (1 - 1e-9)) == pytest.approx(V.derivative(x * (1 + 1e-9)), rel=1e-6)
    grid = np.linspace(0.5, 3.0, 101)
    assert np.all(V.value(grid) > 0)
    assert V.value(4.0) == 64.0
    assert V.value(0.25) == pytest.approx(0.25**-0.75)
    assert V.splice_sup >= 1.0


def test_select_exponents():
    a, b = select_exponents(UniformKernel())
    assert a == 8.0
    assert 0.75 <= b < 1.0
    assert UniformKernel().moment(-b) < 1e3
    a, b = select_exponents(PointMassKernel(r=0.5))
    assert (a, b) == (8.0, 8.0)
    assert select_exponents(BetaShapeKernel(mu0=1.0, mu1=1.0))[1] == 1.75


def test_build_spec_resolves_tail_constants(tcp_model, tcp_kernel):
    spec = build_spec(tcp_model, tcp_kernel)
    assert spec.theta == 2.0
    assert spec.eta == pytest.approx(0.25)
    assert build_spec(tcp_model, tcp_kernel, a=2.0, b=0.5).a == 2.0


# Generator


def test_apply_generator_on_callables(tcp_model, tcp_kernel):
    # f = x: tau - beta x / 2 at x = 1
    assert apply_generator(tcp_model, tcp_kernel, lambda x: x, 1.0) == pytest.approx(0.5, rel=1e-8)


def test_apply_generator_on_log(gamma_model, uniform_kernel):
    assert apply_generator(gamma_model, uniform_kernel, LogObservable(), 2.0) == pytest.approx(-0.5, rel=1e-12)


def test_apply_generator_divergent_integral(gamma_model, uniform_kernel):
    with pytest.raises(DivergentIntegralError):
        apply_generator(gamma_model, uniform_kernel, PowerObservable(-1.0), 1.0)
    with pytest.raises(DomainError):
        apply_generator(gamma_model, uniform_kernel, PowerObservable(1.0), 0.0)


def test_vectorized_generator_matches_pointwise(tcp_model, uniform_kernel):
    xs = np.array([0.1, 1.0, 5.0])
    f = PowerObservable(2.0)
    expected = [apply_generator(tcp_model, uniform_kernel, f, float(x)) for x in xs]
    np.testing.assert_allclose(generator_values(tcp_model, uniform_kernel, f, xs), expected, rtol=1e-10)


# Drift of V


@pytest.mark.parametrize("model_name", sorted(DRIFT_MODELS))
@pytest.mark.parametrize("kernel_name", sorted(DRIFT_KERNELS))
def test_drift_closed_form_below_one(model_name, kernel_name):
    model, kernel = DRIFT_MODELS[model_name], DRIFT_KERNELS[kernel_name]
    spec = build_spec(model, kernel)
    for x in (1e-4, 1e-3, 1e-2, 1e-1):
        point = drift_V(model, kernel, spec, x)
        assert point.exact == pytest.approx(point.closed_form, rel=1e-7)
        assert point.bound is None


@pytest.mark.parametrize("model_name", sorted(DRIFT_MODELS))
@pytest.mark.parametrize("kernel_name", sorted(DRIFT_KERNELS))
def test_drift_bounded_above_two(model_name, kernel_name):
    model, kernel = DRIFT_MODELS[model_name], DRIFT_KERNELS[kernel_name]
    spec = build_spec(model, kernel)
    for x in (10.0, 100.0, 1000.0):
        point = drift_V(model, kernel, spec, x)
        assert point.closed_form is None
        assert point.exact <= point.bound + 1e-8 * abs(point.bound)


def test_drift_report_for_tcp(tcp_model, tcp_kernel):
    spec = build_spec(tcp_model, tcp_kernel)
    report = drift_report(tcp_model, tcp_kernel, spec, np.logspace(-4, 4, 41))
    assert report.compact is not None
    lo, hi = report.compact
    assert lo <= 1.0 <= hi
    assert report.alpha > 0
    assert report.alpha_prime >= 0
    assert report.f_exponent_inf == pytest.approx(9.0)
    assert not report.f_constant_at_inf


# Classification


def _spec(a=2.0, b=0.5):
    return LyapunovSpec(a=a, b=b)


CLASSIFICATION_CASES = [
    # (label, tau, beta, spec, (harris, positive, exp_ergodic), failing)
    ("subcritical", ConstantRate(c=1.0), _power(1.0), _spec(), (True, True, True), []),
    ("constant rates", ConstantRate(c=1.0), ConstantRate(c=1.0), _spec(), (True, True, True), []),
    ("violated at inf", _sum(1.0, 0.0, 1.0, 2.0), ConstantRate(c=1.0), _spec(), (False, False, False), ["balance at ∞"]),
    ("violated at 0", ConstantRate(c=1.0), _sum(1.0, -2.0, 1.0, 1.0), _spec(), (False, False, False), ["balance at 0"]),
    ("violated at both ends", _power(2.0), ConstantRate(c=1.0), _spec(), (False, False, False), ["balance at 0", "balance at ∞"]),
    ("critical at inf, ratio holds", _sum(1.0, 0.0, 1.0, 1.0), ConstantRate(c=0.25), _spec(), (True, True, True), []),
    ("critical at inf, ratio fails", _sum(1.0, 0.0, 1.0, 1.0), ConstantRate(c=1.0), _spec(), (False, False, False), ["critical ratio at ∞"]),
    ("critical at 0, ratio holds", _power(1.0), _sum(1.0, 0.0, 1.0, 1.0), _spec(), (True, True, True), []),
    ("critical at 0, ratio fails", _power(1.0), _sum(0.25, 0.0, 1.0, 1.0), _spec(), (False, False, False), ["critical ratio at 0"]),
    ("a too small", _power(-0.5), _power(-0.5), _spec(a=0.25), (True, False, False), ["a >= -gamma_inf"]),
    ("b too small", _power(2.0), _sum(1.0, 1.5, 1.0, 2.0), _spec(), (True, False, False), ["b >= nu0 - 1"]),
    ("decreasing beta", _power(-0.5), _power(-0.5), _spec(), (True, True, False), ["gamma_inf >= 0"]),
    ("fast growth at 0", _power(1.5), _power(1.0), _spec(), (True, True, False), ["nu0 <= 1"]),
    ("M(-b) infinite", _power(2.5), _power(2.0), _spec(a=1.0, b=2.0), (False, False, False), ["M(-b) < inf"]),
]


@pytest.mark.parametrize(
    "label, tau, beta, spec, tiers, failing", CLASSIFICATION_CASES, ids=[case[0] for case in CLASSIFICATION_CASES]
)
def test_classification_matrix(label, tau, beta, spec, tiers, failing):
    result = classify_balance(_model(tau, beta), UniformKernel(), spec)
    assert (result.harris_recurrent, result.positive_recurrent, result.exp_ergodic) == tiers
    assert result.failing == failing


def test_critical_ends_are_reported():
    result = classify_balance(_model(_sum(1.0, 0.0, 1.0, 1.0), ConstantRate(c=0.25)), UniformKernel(), _spec())
    assert result.critical_at_inf and not result.critical_at_0
    ratio = next(check for check in result.checks if check.name == "critical ratio at ∞")
    # a / (1 - M(a)) = 3 against tau_inf / beta_inf = 4
    assert ratio.lhs == pytest.approx(3.0)
    assert ratio.rhs == pytest.approx(4.0)
    assert ratio.margin == pytest.approx(1.0)


def test_kernel_moment_checks_are_reported():
    result = classify_balance(_model(_power(2.5), _power(2.0)), UniformKernel(), _spec(a=1.0, b=2.0))
    checks = {check.name: check for check in result.checks}
    assert checks["M(a) < 1"].holds
    assert checks["M(a) < 1"].lhs == pytest.approx(0.5)
    assert not checks["M(-b) < inf"].holds
    assert math.isinf(checks["M(-b) < inf"].lhs)
    assert checks["balance at 0"].holds and checks["balance at ∞"].holds
    with pytest.raises(NotPositiveRecurrentError) as exc_info:
        require_positive_recurrent(_model(_power(2.5), _power(2.0)), UniformKernel(), result)
    assert exc_info.value.condition == "M(-b) < inf"


@pytest.mark.parametrize("factor", [0.1, 3.0])
def test_classification_is_invariant_under_time_change(factor):
    kernel = UniformKernel()
    for _, tau, beta, spec, _, _ in CLASSIFICATION_CASES:
        model = _model(tau, beta)
        base = classify_balance(model, kernel, spec)
        scaled = classify_balance(model.time_scaled(factor), kernel, spec)
        assert scaled.failing == base.failing
        assert scaled.exp_ergodic == base.exp_ergodic


def test_require_positive_recurrent_names_condition():
    model = _model(_sum(1.0, 0.0, 1.0, 2.0), ConstantRate(c=1.0))
    with pytest.raises(NotPositiveRecurrentError) as exc_info:
        require_positive_recurrent(model, UniformKernel())
    assert exc_info.value.condition == "balance at ∞"
    assert exc_info.value.exit_code == 2


# Exponential Lyapunov function


def test_bound_v_uniform():
    check = check_bound_v(UniformKernel(), theta=2.0, eta=0.25, eps=0.1, x0=10.0, C=0.1)
    assert check.sup < 0.9
    assert check.passed
    assert check.limit == 0.0


def test_bound_v_point_mass():
    check = check_bound_v(PointMassKernel(r=0.5), theta=2.0, eta=0.25, eps=0.1, x0=10.0, C=0.5)
    assert check.sup < 1e-3
    assert check.passed


def test_bound_v_without_tilt_is_the_moment():
    check = check_bound_v(UniformKernel(), theta=2.0, eta=0.0, eps=0.1, x0=10.0, C=0.1)
    assert check.limit == pytest.approx(1.0 / 0.9)
    assert not check.passed


def test_bound_v_divergent_moment():
    with pytest.raises(DivergentIntegralError):
        check_bound_v(UniformKernel(), theta=2.0, eta=0.25, eps=1.0, x0=10.0, C=0.5)


def test_drift_vtilde(tcp_model, tcp_kernel, uniform_kernel):
    spec = build_spec(tcp_model, tcp_kernel)
    for kernel in (tcp_kernel, uniform_kernel):
        point = drift_Vtilde(tcp_model, kernel, spec, 10.0)
        assert point.exact < 0
        assert point.holds
    with pytest.raises(DomainError):
        drift_Vtilde(tcp_model, tcp_kernel, spec, 0.5)


def test_drift_vtilde_stays_finite_far_out(tcp_model, uniform_kernel):
    spec = build_spec(tcp_model, uniform_kernel)
    point = drift_Vtilde(tcp_model, uniform_kernel, spec, 40.0)
    assert point.holds
    assert math.isfinite(point.exact)


@pytest.mark.parametrize("x", [1.0, 2.5, 6.0])
def test_drift_vtilde_matches_halving_closed_form(tcp_model, tcp_kernel, x):
    # tau = 1, beta = x, halving: L Vtilde(x) = Vtilde'(x) + x (Vtilde(x/2) - Vtilde(x))
    spec = build_spec(tcp_model, tcp_kernel)
    tilt = ExpTiltObservable(spec.eps, spec.eta, spec.theta)
    closed_form = tilt.derivative(x) + x * (tilt.value(x / 2.0) - tilt.value(x))
    assert drift_Vtilde(tcp_model, tcp_kernel, spec, x).exact == pytest.approx(closed_form, rel=1e-9)


def test_drift_vtilde_requires_bound_v(tcp_model, uniform_kernel):
    spec = build_spec(tcp_model, uniform_kernel)
    failed = check_bound_v(uniform_kernel, theta=2.0, eta=0.0, eps=spec.eps, x0=10.0, C=0.1)
    assert not failed.passed
    with pytest.raises(DomainError):
        drift_Vtilde(tcp_model, uniform_kernel, spec, 10.0, bound=failed)
    with pytest.raises(DomainError):
        vtilde_profile(tcp_model, uniform_kernel, spec, [2.0, 4.0], bound=failed)
    passed = check_bound_v(uniform_kernel, spec.theta, spec.eta, spec.eps, 10.0, spec.C)
    assert passed.passed
    assert drift_Vtilde(tcp_model, uniform_kernel, spec, 10.0, bound=passed).holds
