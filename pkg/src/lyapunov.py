"""Lyapunov functions, generator evaluation, drift checks and balance classification."""

import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from errors import DivergentIntegralError, DomainError, ModelValidationError, NotPositiveRecurrentError
from models import (
    BalanceClassification,
    BoundVCheck,
    DriftPoint,
    DriftReport,
    InequalityCheck,
    VtildeDrift,
    VtildeProfile,
)
from rates import RateModel
from utils.observables import CallableObservable, ExpTiltObservable, Observable


logger = logging.getLogger("lyapunov")

MARGIN = 1e-9
CRITICAL_RTOL = 1e-6
A_GRID = np.arange(0.5, 8.0 + 1e-12, 0.5)
B_STEP = 0.25
B_CAP = 8.0
_LN2 = math.log(2.0)


class LyapunovSpec(BaseModel):
    """Exponents of V (a, b) and of the exponential variant (eps, eta, theta, C)."""

    model_config = ConfigDict(frozen=True)

    a: float = Field(gt=0)
    b: float = Field(gt=0)
    eps: float = Field(default=0.1, ge=0)
    eta: Optional[float] = Field(default=None, ge=0)
    theta: Optional[float] = Field(default=None, gt=0)
    C: float = Field(default=0.5, gt=0, lt=1)


def select_exponents(kernel) -> Tuple[float, float]:
    """Largest a on {0.5, ..., 8} with M(a) < 1 - 1e-3 and largest b with M(-b) < 1e3.

    b ranges over multiples of 0.25 below mu0 + 1 - 1e-3 (plus that endpoint)
    for kernels with mass near 0, and up to 8 otherwise.
    """
    a_ok = [float(a) for a in A_GRID if kernel.moment(float(a)) < 1.0 - 1e-3]
    if not a_ok:
        raise ModelValidationError("no a in [0.5, 8] with M(a) < 1; the kernel barely fragments")
    bd = kernel.boundary_data
    end = B_CAP if bd is None or bd.q0 == 0 else min(B_CAP, bd.mu0 + 1.0 - 1e-3)
    candidates = [float(b) for b in np.arange(B_STEP, end, B_STEP)] + [end]
    b_ok = [b for b in candidates if b > 0 and kernel.moment(-b) < 1e3]
    if not b_ok:
        raise ModelValidationError("no b > 0 with M(-b) < 1e3")
    a, b = max(a_ok), max(b_ok)
    logger.info(f"selected Lyapunov exponents a={a:g}, b={b:g}")
    return a, b


def build_spec(
    model: RateModel,
    kernel,
    a: Union[float, str] = "auto",
    b: Union[float, str] = "auto",
    eps: float = 0.1,
    eta: Union[float, str] = "auto",
    theta: Union[float, str] = "auto",
    C: float = 0.5,
) -> LyapunovSpec:
    """Resolve "auto" entries: (a, b) by select_exponents, theta and eta from the asymptotics."""
    if a == "auto" or b == "auto":
        auto_a, auto_b = select_exponents(kernel)
        a = auto_a if a == "auto" else a
        b = auto_b if b == "auto" else b
    tau, beta = model.tau_asym, model.beta_asym
    if theta == "auto":
        theta = beta.exp_inf + 1.0 - tau.exp_inf
        theta = theta if theta > 0 else None
    if eta == "auto":
        eta = C * beta.coef_inf / (theta * tau.coef_inf) if theta else None
    return LyapunovSpec(a=a, b=b, eps=eps, eta=eta, theta=theta, C=C)


class LyapunovV(Observable):
    """V = x^-b on (0, 1], x^a on [2, inf), joined on [1, 2].

    The join is a quintic Hermite interpolant of log V in log x, matching value,
    first and second derivatives at both ends, so V stays positive and C^2.
    """

    def __init__(self, a: float, b: float):
        self.a = a
        self.b = b
        self.name = f"V(a={a:g}, b={b:g})"
        L = _LN2
        # W(s) = -b*s + c3 s^3 + c4 s^4 + c5 s^5 with W(L)=aL, W'(L)=a, W''(L)=0
        lhs = np.array(
            [[L**3, L**4, L**5], [3 * L**2, 4 * L**3, 5 * L**4], [6 * L, 12 * L**2, 20 * L**3]]
        )
        rhs = np.array([(a + b) * L, a + b, 0.0])
        self._c = np.linalg.solve(lhs, rhs)
        grid = np.linspace(1.0, 2.0, 401)
        self.splice_sup = float(np.max(self.value(grid)))

    def _w(self, s):
        c3, c4, c5 = self._c
        return -self.b * s + c3 * s**3 + c4 * s**4 + c5 * s**5

    def _w1(self, s):
        c3, c4, c5 = self._c
        return -self.b + 3 * c3 * s**2 + 4 * c4 * s**3 + 5 * c5 * s**4

    def _w2(self, s):
        c3, c4, c5 = self._c
        return 6 * c3 * s + 12 * c4 * s**2 + 20 * c5 * s**3

    def value(self, x):
        arr = np.asarray(x, dtype=float)
        s = np.log(np.clip(arr, 1.0, 2.0))
        out = np.where(
            arr <= 1.0,
            np.power(arr, -self.b),
            np.where(arr >= 2.0, np.power(arr, self.a), np.exp(self._w(s))),
        )
        return out if np.ndim(x) else float(out)

    def derivative(self, x: float) -> float:
        if x <= 1.0:
            return -self.b * x ** (-self.b - 1.0)
        if x >= 2.0:
            return self.a * x ** (self.a - 1.0)
        s = math.log(x)
        return self.value(x) * self._w1(s) / x

    def derivatives(self, xs):
        return np.array([self.derivative(float(x)) for x in np.asarray(xs, dtype=float)])

    def second_derivative(self, x: float) -> float:
        if x <= 1.0:
            return self.b * (self.b + 1.0) * x ** (-self.b - 2.0)
        if x >= 2.0:
            return self.a * (self.a - 1.0) * x ** (self.a - 2.0)
        s = math.log(x)
        w1 = self._w1(s)
        return self.value(x) * (self._w2(s) + w1 * w1 - w1) / (x * x)

    def splice_convex(self) -> bool:
        return all(self.second_derivative(float(x)) >= 0 for x in np.linspace(1.0, 2.0, 201))

    def check_integrable(self, kernel) -> None:
        if math.isinf(kernel.moment(-self.b)):
            raise DivergentIntegralError(f"M(-{self.b:g})")

    def kernel_points(self, x: float):
        return tuple(p for p in (1.0 / x, 2.0 / x) if 0.0 < p < 1.0)


def _as_observable(f) -> Observable:
    if isinstance(f, Observable):
        return f
    return CallableObservable(f, name=getattr(f, "__name__", "f"))


def apply_generator(model: RateModel, kernel, f: Union[Observable, Callable[[float], float]], x: float) -> float:
    """Lf(x) = tau(x) f'(x) + beta(x) (int f(xy) Q(dy) - f(x)).

    Raises:
        DivergentIntegralError: if the kernel integral of f is infinite.
    """
    if not x > 0:
        raise DomainError(f"sizes must be positive, got {x!r}")
    obs = _as_observable(f)
    obs.check_integrable(kernel)
    return model.tau(x) * obs.derivative(x) + model.beta(x) * (obs.kernel_term(kernel, x) - obs.value(x))


def generator_values(model: RateModel, kernel, f, xs: np.ndarray) -> np.ndarray:
    """Vectorized Lf on many sizes using the kernel quadrature rule."""
    obs = _as_observable(f)
    obs.check_integrable(kernel)
    xs = np.asarray(xs, dtype=float)
    return model.tau(xs) * obs.derivatives(xs) + model.beta(xs) * (
        obs.kernel_terms(kernel, xs) - obs.value(xs)
    )


def drift_V(model: RateModel, kernel, spec: LyapunovSpec, x: float) -> DriftPoint:
    """Exact LV(x) with the closed form (x <= 1) or the upper bound (x >= 2) beside it."""
    V = LyapunovV(spec.a, spec.b)
    exact = apply_generator(model, kernel, V, x)
    m_minus_b = kernel.moment(-spec.b)
    tau, beta = model.tau(x), model.beta(x)
    closed_form = bound = None
    if x <= 1.0:
        closed_form = (-spec.b * tau / x + beta * (m_minus_b - 1.0)) * x ** (-spec.b)
    elif x >= 2.0:
        bound = spec.a * tau * x ** (spec.a - 1.0) + beta * (
            x ** (-spec.b) * m_minus_b + V.splice_sup + x**spec.a * (kernel.moment(spec.a) - 1.0)
        )
    return DriftPoint(x=x, exact=exact, closed_form=closed_form, bound=bound)


def _end_slope(xs: np.ndarray, values: np.ndarray) -> Optional[float]:
    if np.any(values >= 0):
        return None
    return float(np.polyfit(np.log(xs), np.log(-values), 1)[0])


def drift_report(model: RateModel, kernel, spec: LyapunovSpec, grid: Sequence[float]) -> DriftReport:
    """LV on a grid, the compact [1/A, A] outside which it is negative, and (alpha, alpha')."""
    V = LyapunovV(spec.a, spec.b)
    xs = np.asarray(sorted(grid), dtype=float)
    points = [drift_V(model, kernel, spec, float(x)) for x in xs]
    values = np.array([p.exact for p in points])
    notes: List[str] = []

    compact = alpha = alpha_prime = None
    bad = xs[values >= 0]
    if bad.size == 0:
        compact = (1.0, 1.0)
    elif values[0] < 0 and values[-1] < 0:
        A = max(1.0, 1.0 / bad.min(), bad.max())
        compact = (1.0 / A, A)
    else:
        notes.append("LV is not negative at the ends of the grid")

    if compact is not None:
        outside = (xs < compact[0]) | (xs > compact[1])
        vx = V.value(xs)
        if np.any(outside):
            alpha = float(np.min(-values[outside] / vx[outside]))
            inside = ~outside
            alpha_prime = float(max(0.0, np.max(values[inside] + alpha * vx[inside]))) if np.any(inside) else 0.0

    tau, beta = model.tau_asym, model.beta_asym
    f_inf = spec.a + beta.exp_inf
    constant_inf = abs(f_inf) <= CRITICAL_RTOL
    if constant_inf:
        notes.append("a + gamma_inf = 0: f is constant at inf, no moment is implied there")
    convex = V.splice_convex()
    if not convex:
        notes.append("splice of V on [1, 2] is not convex")
    for note in notes:
        logger.warning(note)
    n_end = min(5, len(xs))
    return DriftReport(
        a=spec.a,
        b=spec.b,
        points=points,
        slope_zero=_end_slope(xs[:n_end], values[:n_end]),
        slope_inf=_end_slope(xs[-n_end:], values[-n_end:]),
        compact=compact,
        alpha=alpha,
        alpha_prime=alpha_prime,
        f_exponent_zero=tau.exp_zero - 1.0 - spec.b,
        f_exponent_inf=f_inf,
        f_constant_at_inf=constant_inf,
        splice_convex=convex,
        notes=notes,
    )


def _check(name: str, lhs: float, relation: str, rhs: float, tol: float = MARGIN) -> InequalityCheck:
    margin = (lhs - rhs) if relation in (">", ">=") else (rhs - lhs)
    holds = margin > tol if relation in ("<", ">") else margin >= -tol
    return InequalityCheck(name=name, lhs=lhs, relation=relation, rhs=rhs, margin=margin, holds=holds)


def _finite_check(name: str, value: float) -> InequalityCheck:
    finite = math.isfinite(value)
    return InequalityCheck(
        name=name, lhs=value, relation="<", rhs=math.inf, margin=math.inf if finite else -math.inf, holds=finite
    )


def _is_critical(lhs: float, rhs: float) -> bool:
    return abs(lhs - rhs) <= CRITICAL_RTOL * max(1.0, abs(lhs), abs(rhs))


def classify_balance(model: RateModel, kernel, spec: LyapunovSpec) -> BalanceClassification:
    """Recurrence tiers from the asymptotic exponents and the kernel moments.

    harris: M(a) < 1, M(-b) < inf, and at each end strict balance
    gamma > nu - 1 or equality with the critical ratio condition. positive:
    also b >= nu0 - 1 and a >= -gamma_inf. exp_ergodic: also nu0 <= 1 and
    gamma_inf >= 0.
    """
    tau, beta = model.tau_asym, model.beta_asym
    a, b = spec.a, spec.b
    checks: List[InequalityCheck] = []
    failing: List[str] = []

    def end(label, gamma, nu, ratio_lhs, ratio_rhs):
        balance = _check(f"balance at {label}", gamma, ">", nu - 1.0)
        checks.append(balance)
        critical = _is_critical(gamma, nu - 1.0)
        if balance.holds and not critical:
            return True, False
        if critical:
            ratio = _check(f"critical ratio at {label}", ratio_lhs, "<", ratio_rhs)
            checks.append(ratio)
            if not ratio.holds:
                failing.append(ratio.name)
            return ratio.holds, True
        failing.append(balance.name)
        return False, False

    m_minus_b, m_a = kernel.moment(-b), kernel.moment(a)
    moments = [_check("M(a) < 1", m_a, "<", 1.0), _finite_check("M(-b) < inf", m_minus_b)]
    checks.extend(moments)
    failing.extend(check.name for check in moments if not check.holds)
    zero_lhs = 0.0 if math.isinf(m_minus_b) else b / (m_minus_b - 1.0)
    inf_lhs = a / (1.0 - m_a) if m_a < 1.0 else math.inf
    ok_zero, critical_zero = end("0", beta.exp_zero, tau.exp_zero, zero_lhs, beta.coef_zero / tau.coef_zero)
    ok_inf, critical_inf = end("∞", beta.exp_inf, tau.exp_inf, inf_lhs, tau.coef_inf / beta.coef_inf)
    harris = all(check.holds for check in moments) and ok_zero and ok_inf

    positive = harris
    for check in (
        _check("b >= nu0 - 1", b, ">=", tau.exp_zero - 1.0),
        _check("a >= -gamma_inf", a, ">=", -beta.exp_inf),
    ):
        checks.append(check)
        positive = positive and check.holds
        if harris and not check.holds:
            failing.append(check.name)

    exp_ergodic = positive
    for check in (
        _check("nu0 <= 1", tau.exp_zero, "<=", 1.0),
        _check("gamma_inf >= 0", beta.exp_inf, ">=", 0.0),
    ):
        checks.append(check)
        exp_ergodic = exp_ergodic and check.holds
        if positive and not check.holds:
            failing.append(check.name)

    return BalanceClassification(
        harris_recurrent=harris,
        positive_recurrent=positive,
        exp_ergodic=exp_ergodic,
        critical_at_0=critical_zero,
        critical_at_inf=critical_inf,
        a=a,
        b=b,
        checks=checks,
        failing=failing,
    )


def check_bound_v(
    kernel,
    theta: float,
    eta: float,
    eps: float,
    x0: float,
    C: float,
    points: int = 31,
) -> BoundVCheck:
    """sup over x >= x0 of int y^-eps exp(eta x^theta (y^theta - 1)) Q(dy), compared with 1 - C.

    The sup is taken over a log grid on [x0, 1000 x0] and the x -> inf limit,
    which is the mass of Q at 1 (zero after phantom stripping).

    Raises:
        DivergentIntegralError: if M(-eps) is infinite.
    """
    if theta <= 0 or eta < 0 or eps < 0:
        raise DomainError("check_bound_v needs theta > 0, eta >= 0, eps >= 0")
    tilt = ExpTiltObservable(eps, eta, theta)
    tilt.check_integrable(kernel)
    grid = np.logspace(math.log10(x0), math.log10(x0) + 3.0, points)
    values = [tilt.kernel_ratio(kernel, float(x)) for x in grid]
    limit = kernel.moment(-eps) if eta == 0 else kernel.atom_at_one
    grid_sup = float(max(values))
    sup = max(grid_sup, limit)
    return BoundVCheck(
        theta=theta,
        eta=eta,
        eps=eps,
        x0=x0,
        C=C,
        grid_sup=grid_sup,
        limit=limit,
        sup=sup,
        passed=sup < 1.0 - C,
    )


def drift_Vtilde(
    model: RateModel, kernel, spec: LyapunovSpec, x: float, bound: Optional[BoundVCheck] = None
) -> VtildeDrift:
    """Exact L(Vtilde)(x) against the envelope -(eps tau_inf / 4) x^(nu_inf - 1) Vtilde(x).

    bound is the check_bound_v result for the same (theta, eta, eps, C); the
    drift is only meaningful when it passed.

    Raises:
        DomainError: if x < 1 or bound did not pass.
    """
    if x < 1.0:
        raise DomainError(f"Vtilde is defined for x >= 1, got x={x}")
    if bound is not None and not bound.passed:
        raise DomainError(f"BoundV fails (sup {bound.sup:.4g} >= 1 - C = {1.0 - bound.C:.4g}); no Vtilde drift")
    if spec.eta is None or spec.theta is None:
        raise ModelValidationError("exponential Lyapunov function needs theta > 0 (balance at ∞)")
    tilt = ExpTiltObservable(spec.eps, spec.eta, spec.theta)
    tilt.check_integrable(kernel)
    value = tilt.value(x)
    ratio = model.tau(x) * tilt.log_derivative(x) + model.beta(x) * (tilt.kernel_ratio(kernel, x) - 1.0)
    tau = model.tau_asym
    envelope_ratio = -(spec.eps * tau.coef_inf / 4.0) * x ** (tau.exp_inf - 1.0)
    return VtildeDrift(
        x=x,
        exact=value * ratio,
        envelope=value * envelope_ratio,
        holds=ratio <= envelope_ratio,
    )


def vtilde_profile(
    model: RateModel, kernel, spec: LyapunovSpec, grid: Sequence[float], bound: Optional[BoundVCheck] = None
) -> VtildeProfile:
    """drift_Vtilde on a grid and the first grid point beyond which the envelope always holds."""
    points = [drift_Vtilde(model, kernel, spec, float(x), bound) for x in sorted(grid)]
    threshold = None
    for point in reversed(points):
        if not point.holds:
            break
        threshold = point.x
    return VtildeProfile(points=points, threshold=threshold)


def require_positive_recurrent(
    model: RateModel, kernel, classification: Optional[BalanceClassification] = None
) -> BalanceClassification:
    """Classify with auto exponents if needed; raise NotPositiveRecurrentError naming the first failing condition."""
    classification = classification or classify_balance(model, kernel, build_spec(model, kernel))
    if not classification.positive_recurrent:
        condition = classification.failing[0] if classification.failing else "positive recurrence"
        raise NotPositiveRecurrentError(condition)
    return classification
