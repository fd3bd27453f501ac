"""Growth/fragmentation rate models and fragmentation kernels.

Rates are positive functions on (0, inf) declared as one of a few families
(constant, pure power, two-term power, log-log table). Kernels are laws of the
relative daughter size y in (0, 1), independent of the mother's size x, so
M(a) = M_x(a) for all x.
"""

import logging
import math
import warnings
from typing import Annotated, Callable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, special

from errors import DegenerateKernelError, DomainError, ModelValidationError


logger = logging.getLogger("rates")

QUAD_RTOL = 1e-10
MASS_TOL = 1e-10
RENORMALIZATION_WARN = 1e-3
CHECK_GRID = np.logspace(-8, 8, 161)
_S_TAIL = 60.0


def _finish(x, values):
    """Return a float for scalar input, an array otherwise."""
    return float(values) if np.ndim(x) == 0 else values


def _require_positive(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"sizes must be positive, got {x!r}")
    return arr


def _quad(fn: Callable[[float], float], lo: float, hi: float, points=None) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr = integrate.quad(
            fn, lo, hi, epsabs=0.0, epsrel=QUAD_RTOL, limit=400, points=points
        )
    if abserr > 1e-6 * max(abs(value), 1e-300):
        logger.debug(f"quadrature on [{lo:.3g}, {hi:.3g}] has error estimate {abserr:.3g}")
    return value


def _power_tail(fn: Callable[[float], float]) -> float:
    """Integral of fn over (0, e^-S_TAIL) assuming fn(u) ~ c u^(k-1) there."""
    u1 = math.exp(-_S_TAIL)
    f1, f2 = fn(u1), fn(u1 * math.e)
    if f1 == 0.0 or f2 == 0.0 or (f1 > 0) != (f2 > 0):
        return 0.0
    k = 1.0 + math.log(f2 / f1)
    if k <= 0:
        return math.inf if f1 > 0 else -math.inf
    return f1 * u1 / k


# ---------------------------------------------------------------------------
# Rate families
# ---------------------------------------------------------------------------


class AsymptoticData(BaseModel):
    """Power-law asymptotics c0*x^p0 as x->0 and cinf*x^pinf as x->inf."""

    model_config = ConfigDict(frozen=True)

    coef_zero: float = Field(gt=0)
    exp_zero: float
    coef_inf: float = Field(gt=0)
    exp_inf: float


class _PowerSumRate(BaseModel):
    """Shared behaviour of the families that are finite sums of powers."""

    model_config = ConfigDict(frozen=True)

    @property
    def terms(self) -> List[Tuple[float, float]]:
        raise NotImplementedError

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        total = np.zeros_like(arr)
        for coef, power in self.terms:
            total = total + coef * np.power(arr, power)
        return _finish(x, total)

    def asymptotics(self) -> AsymptoticData:
        live = [(c, p) for c, p in self.terms if c > 0]
        low = min(p for _, p in live)
        high = max(p for _, p in live)
        return AsymptoticData(
            coef_zero=sum(c for c, p in live if p == low),
            exp_zero=low,
            coef_inf=sum(c for c, p in live if p == high),
            exp_inf=high,
        )

    def sup_on(self, lo: float, hi: float) -> float:
        # each term is monotone, so its sup sits at an endpoint
        return float(
            sum(max(c * lo**p, c * hi**p) for c, p in self.terms if c > 0)
        )


class ConstantRate(_PowerSumRate):
    family: Literal["constant"] = "constant"
    c: float = Field(gt=0)

    @property
    def terms(self) -> List[Tuple[float, float]]:
        return [(self.c, 0.0)]

    def scaled(self, factor: float) -> "ConstantRate":
        return ConstantRate(c=self.c * factor)


class PowerRate(_PowerSumRate):
    family: Literal["power"] = "power"
    c: float = Field(gt=0)
    p: float

    @property
    def terms(self) -> List[Tuple[float, float]]:
        return [(self.c, self.p)]

    def scaled(self, factor: float) -> "PowerRate":
        return PowerRate(c=self.c * factor, p=self.p)


class TwoTermRate(_PowerSumRate):
    family: Literal["two_term"] = "two_term"
    c1: float = Field(ge=0)
    p1: float
    c2: float = Field(ge=0)
    p2: float

    @model_validator(mode="after")
    def _not_both_zero(self) -> "TwoTermRate":
        if self.c1 == 0 and self.c2 == 0:
            raise ValueError("two-term rate needs at least one positive coefficient")
        return self

    @property
    def terms(self) -> List[Tuple[float, float]]:
        return [(c, p) for c, p in ((self.c1, self.p1), (self.c2, self.p2)) if c > 0]

    def scaled(self, factor: float) -> "TwoTermRate":
        return TwoTermRate(c1=self.c1 * factor, p1=self.p1, c2=self.c2 * factor, p2=self.p2)


class TableRate(BaseModel):
    """Rate given at knots, interpolated linearly in log-log coordinates.

    Beyond the first/last knot the end segments are continued as power laws,
    which keeps the rate positive and its asymptotic exponents well defined.
    """

    model_config = ConfigDict(frozen=True)

    family: Literal["table"] = "table"
    knots: List[float]
    values: List[float]

    @model_validator(mode="after")
    def _check_table(self) -> "TableRate":
        if len(self.knots) < 2 or len(self.knots) != len(self.values):
            raise ValueError("table needs at least two knots and one value per knot")
        if any(k <= 0 for k in self.knots) or any(v <= 0 for v in self.values):
            raise ValueError("table knots and values must be positive")
        if any(b <= a for a, b in zip(self.knots, self.knots[1:])):
            raise ValueError("table knots must be strictly increasing")
        return self

    @property
    def terms(self) -> None:
        return None

    def __call__(self, x):
        lx = np.log(np.asarray(x, dtype=float))
        kx = np.log(self.knots)
        kv = np.log(self.values)
        left = (kv[1] - kv[0]) / (kx[1] - kx[0])
        right = (kv[-1] - kv[-2]) / (kx[-1] - kx[-2])
        out = np.interp(lx, kx, kv)
        out = np.where(lx < kx[0], kv[0] + left * (lx - kx[0]), out)
        out = np.where(lx > kx[-1], kv[-1] + right * (lx - kx[-1]), out)
        return _finish(x, np.exp(out))

    def asymptotics(self) -> AsymptoticData:
        """Least-squares power laws through the 5 extreme knots in log-log scale."""
        kx = np.log(self.knots)
        kv = np.log(self.values)
        n = min(5, len(kx))
        slope0, icpt0 = np.polyfit(kx[:n], kv[:n], 1)
        slope1, icpt1 = np.polyfit(kx[-n:], kv[-n:], 1)
        return AsymptoticData(
            coef_zero=float(np.exp(icpt0)),
            exp_zero=float(slope0),
            coef_inf=float(np.exp(icpt1)),
            exp_inf=float(slope1),
        )

    def sup_on(self, lo: float, hi: float) -> float:
        # piecewise monotone in log-log, so the sup is at an endpoint or a knot
        inner = [k for k in self.knots if lo < k < hi]
        return float(np.max(self(np.array([lo, hi, *inner]))))

    def scaled(self, factor: float) -> "TableRate":
        return TableRate(knots=list(self.knots), values=[v * factor for v in self.values])


RateFunction = Annotated[
    Union[ConstantRate, PowerRate, TwoTermRate, TableRate],
    Field(discriminator="family"),
]


class RateModel(BaseModel):
    """Growth rate tau and fragmentation rate beta with their asymptotic data."""

    model_config = ConfigDict(frozen=True)

    tau: RateFunction
    beta: RateFunction
    tau_declared: Optional[AsymptoticData] = None
    beta_declared: Optional[AsymptoticData] = None
    asymptotic_tolerance: float = Field(default=0.05, gt=0)

    @property
    def tau_asym(self) -> AsymptoticData:
        return self._resolve(self.tau, self.tau_declared)

    @property
    def beta_asym(self) -> AsymptoticData:
        return self._resolve(self.beta, self.beta_declared)

    @staticmethod
    def _resolve(rate, declared: Optional[AsymptoticData]) -> AsymptoticData:
        if isinstance(rate, TableRate) and declared is not None:
            return declared
        return rate.asymptotics()

    def time_scaled(self, factor: float) -> "RateModel":
        """Model of the time-changed process: (tau, beta) -> (c*tau, c*beta)."""

        def _scale(data: Optional[AsymptoticData]) -> Optional[AsymptoticData]:
            if data is None:
                return None
            return data.model_copy(
                update={"coef_zero": data.coef_zero * factor, "coef_inf": data.coef_inf * factor}
            )

        return RateModel(
            tau=self.tau.scaled(factor),
            beta=self.beta.scaled(factor),
            tau_declared=_scale(self.tau_declared),
            beta_declared=_scale(self.beta_declared),
            asymptotic_tolerance=self.asymptotic_tolerance,
        )

    def with_beta(self, beta, factor: float = 1.0) -> "RateModel":
        declared = self.beta_declared
        if declared is not None and factor != 1.0:
            declared = declared.model_copy(
                update={"coef_zero": declared.coef_zero * factor, "coef_inf": declared.coef_inf * factor}
            )
        return self.model_copy(update={"beta": beta, "beta_declared": declared})

    def validate_assumptions(self) -> List[str]:
        """Check positivity and asymptotic consistency of tau and beta.

        Returns:
            Notes on recorded (non-fatal) discrepancies.

        Raises:
            ModelValidationError: if a rate vanishes on the check grid or a
                declared exponent contradicts a built-in family.
        """
        notes: List[str] = []
        for name, rate, declared in (
            ("tau", self.tau, self.tau_declared),
            ("beta", self.beta, self.beta_declared),
        ):
            values = np.asarray(rate(CHECK_GRID))
            if not np.all(np.isfinite(values)) or np.any(values <= 0):
                bad = CHECK_GRID[~(np.isfinite(values) & (values > 0))][0]
                raise ModelValidationError(f"{name} is not positive and finite at x={bad:.3g}")
            notes.extend(self._check_asymptotics(name, rate, declared))
        for note in notes:
            logger.warning(note)
        return notes

    def _check_asymptotics(self, name: str, rate, declared: Optional[AsymptoticData]) -> List[str]:
        notes: List[str] = []
        fitted = rate.asymptotics()
        if not isinstance(rate, TableRate):
            if declared is not None and (
                not math.isclose(declared.exp_zero, fitted.exp_zero, abs_tol=1e-12)
                or not math.isclose(declared.exp_inf, fitted.exp_inf, abs_tol=1e-12)
            ):
                raise ModelValidationError(
                    f"declared exponents of {name} ({declared.exp_zero}, {declared.exp_inf}) differ "
                    f"from the {rate.family} family ({fitted.exp_zero}, {fitted.exp_inf})"
                )
            return notes
        used = declared or fitted
        if declared is not None:
            for end, dec, fit in (
                ("0", declared.exp_zero, fitted.exp_zero),
                ("inf", declared.exp_inf, fitted.exp_inf),
            ):
                if abs(dec - fit) > self.asymptotic_tolerance:
                    notes.append(
                        f"{name}: declared exponent at {end} ({dec:.4g}) overrides fitted ({fit:.4g})"
                    )
        knots = np.asarray(rate.knots)
        for end, end_knots, coef, power in (
            ("0", knots[:3], used.coef_zero, used.exp_zero),
            ("inf", knots[-3:], used.coef_inf, used.exp_inf),
        ):
            gap = np.abs(np.log(rate(end_knots)) - np.log(coef * end_knots**power))
            if np.max(gap) > self.asymptotic_tolerance:
                notes.append(
                    f"{name}: table deviates from its power law at {end} by {np.max(gap):.3g} in log scale"
                )
        return notes


def eval_tau(model: RateModel, x):
    """Growth rate tau(x)."""
    return model.tau(_require_positive(x) if np.ndim(x) else float(_require_positive(x)))


def eval_beta(model: RateModel, x):
    """Fragmentation rate beta(x)."""
    return model.beta(_require_positive(x) if np.ndim(x) else float(_require_positive(x)))


# ---------------------------------------------------------------------------
# Fragmentation kernels
# ---------------------------------------------------------------------------


class BoundaryData(BaseModel):
    """Density asymptotics q(y) ~ q0*y^mu0 at 0 and q1*(1-y)^mu1 at 1."""

    model_config = ConfigDict(frozen=True)

    q0: float = Field(ge=0)
    mu0: float = Field(gt=-1)
    q1: float = Field(ge=0)
    mu1: float = Field(gt=-1)


class _KernelBase(BaseModel):
    model_config = ConfigDict(frozen=True)

    @property
    def x_dependent(self) -> bool:
        return False

    @property
    def atom_at_one(self) -> float:
        return 0.0

    @property
    def boundary_data(self) -> Optional[BoundaryData]:
        return None

    def moment(self, a: float) -> float:
        raise NotImplementedError

    def expect(self, g: Callable[[float], float], points: Sequence[float] = ()) -> float:
        """Integral of g(y) Q(dy) over (0, 1)."""
        raise NotImplementedError

    def quadrature_rule(self, n: int = 64) -> Tuple[np.ndarray, np.ndarray]:
        """Nodes in (0, 1] and weights summing to 1 that integrate against Q."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def cdf(self, y):
        raise NotImplementedError

    def mean_log(self) -> float:
        return self.expect(math.log)

    def total_mass(self) -> float:
        return self.expect(lambda y: 1.0)


class PointMassKernel(_KernelBase):
    """Deterministic division at relative size r (r = 1/2 is equal mitosis)."""

    variant: Literal["point_mass"] = "point_mass"
    r: float = Field(gt=0, lt=1)

    def moment(self, a: float) -> float:
        return 1.0 if a == 0 else self.r**a

    def expect(self, g, points=()) -> float:
        return float(g(self.r))

    def quadrature_rule(self, n: int = 64):
        return np.array([self.r]), np.array([1.0])

    def sample(self, rng, size=None):
        return self.r if size is None else np.full(size, self.r)

    def cdf(self, y):
        return _finish(y, (np.asarray(y, dtype=float) >= self.r).astype(float))

    def mean_log(self) -> float:
        return math.log(self.r)

    def total_mass(self) -> float:
        return 1.0


class _DensityKernel(_KernelBase):
    """Kernels with a density, integrated with exponential endpoint substitutions."""

    def _density(self, y, ybar):
        """Density at y, with ybar = 1 - y supplied exactly near 1."""
        raise NotImplementedError

    def density(self, y):
        arr = np.asarray(y, dtype=float)
        return _finish(y, self._density(arr, 1.0 - arr))

    def _diverges(self, a: float) -> bool:
        bd = self.boundary_data
        return bd.q0 > 0 and a <= -(bd.mu0 + 1)

    def moment(self, a: float) -> float:
        if a == 0:
            return 1.0
        if self._diverges(a):
            return math.inf
        return self.expect(lambda y: y**a)

    def _segment(self, g, lo: float, hi: float) -> float:
        total = 0.0
        if lo == 0.0:
            cut = min(hi, 0.5)

            def near_zero(s):
                y = math.exp(-s)
                return g(y) * self._density(y, 1.0 - y) * y

            total += _quad(near_zero, -math.log(cut), _S_TAIL)
            total += _power_tail(lambda u: g(u) * self._density(u, 1.0 - u))
            lo = cut
        if hi == 1.0 and lo < 1.0:
            cut = max(lo, 0.5)

            def near_one(s):
                ybar = math.exp(-s)
                return g(1.0 - ybar) * self._density(1.0 - ybar, ybar) * ybar

            total += _quad(near_one, -math.log1p(-cut), _S_TAIL)
            total += _power_tail(lambda u: g(1.0 - u) * self._density(1.0 - u, u))
            hi = cut
        if hi > lo:
            total += _quad(lambda y: g(y) * self._density(y, 1.0 - y), lo, hi)
        return total

    def _breakpoints(self) -> List[float]:
        return []

    def expect(self, g, points=()) -> float:
        cuts = sorted({float(p) for p in (*points, *self._breakpoints()) if 0.0 < p < 1.0})
        edges = [0.0, *cuts, 1.0]
        return float(sum(self._segment(g, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])))


class UniformKernel(_DensityKernel):
    """Uniform mitosis: y ~ U(0, 1)."""

    variant: Literal["uniform"] = "uniform"

    @property
    def boundary_data(self) -> BoundaryData:
        return BoundaryData(q0=1.0, mu0=0.0, q1=1.0, mu1=0.0)

    def _density(self, y, ybar):
        return np.ones_like(y) if np.ndim(y) else 1.0

    def moment(self, a: float) -> float:
        if a == 0:
            return 1.0
        return 1.0 / (a + 1.0) if a > -1 else math.inf

    def quadrature_rule(self, n: int = 64):
        t, w = special.roots_legendre(n)
        return (t + 1.0) / 2.0, w / 2.0

    def sample(self, rng, size=None):
        # (0, 1]: a zero draw would kill the cell
        return 1.0 - rng.random(size)

    def cdf(self, y):
        return _finish(y, np.clip(np.asarray(y, dtype=float), 0.0, 1.0))

    def mean_log(self) -> float:
        return -1.0


class BetaShapeKernel(_DensityKernel):
    """Density proportional to y^mu0 (1-y)^mu1 on (0, 1)."""

    variant: Literal["beta"] = "beta"
    mu0: float = Field(gt=-1)
    mu1: float = Field(gt=-1)

    @property
    def _norm(self) -> float:
        return float(special.beta(self.mu0 + 1.0, self.mu1 + 1.0))

    @property
    def boundary_data(self) -> BoundaryData:
        q = 1.0 / self._norm
        return BoundaryData(q0=q, mu0=self.mu0, q1=q, mu1=self.mu1)

    def _density(self, y, ybar):
        return np.power(y, self.mu0) * np.power(ybar, self.mu1) / self._norm

    def quadrature_rule(self, n: int = 64):
        # Gauss-Jacobi weight (1-t)^alpha (1+t)^beta with y = (1+t)/2
        t, w = special.roots_jacobi(n, self.mu1, self.mu0)
        return (t + 1.0) / 2.0, w / np.sum(w)

    def sample(self, rng, size=None):
        draws = rng.beta(self.mu0 + 1.0, self.mu1 + 1.0, size)
        # shapes close to 0 can underflow to the endpoints
        return np.clip(draws, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)

    def cdf(self, y):
        arr = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
        return _finish(y, special.betainc(self.mu0 + 1.0, self.mu1 + 1.0, arr))

    def mean_log(self) -> float:
        return float(special.digamma(self.mu0 + 1.0) - special.digamma(self.mu0 + self.mu1 + 2.0))


class TabulatedKernel(_DensityKernel):
    """Piecewise-linear density through (knot, value) pairs, renormalized to mass 1."""

    variant: Literal["tabulated"] = "tabulated"
    knots: List[float]
    values: List[float]
    raw_mass: Optional[float] = None

    @model_validator(mode="before")
    @classmethod
    def _renormalize(cls, data):
        if not isinstance(data, dict) or "knots" not in data or "values" not in data:
            return data
        knots = [float(k) for k in data["knots"]]
        values = [float(v) for v in data["values"]]
        if len(knots) < 2 or len(knots) != len(values):
            raise ValueError("tabulated kernel needs at least two knots and one value per knot")
        if knots[0] < 0 or knots[-1] > 1 or any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("tabulated knots must increase strictly inside [0, 1]")
        if any(v < 0 for v in values):
            raise ValueError("tabulated density values must be nonnegative")
        mass = float(np.trapezoid(values, knots))
        if mass <= 0:
            raise ValueError("tabulated density has zero mass")
        if abs(mass - 1.0) > RENORMALIZATION_WARN:
            logger.warning(f"tabulated kernel mass {mass:.6g} renormalized to 1")
        return {**data, "knots": knots, "values": [v / mass for v in values], "raw_mass": mass}

    @property
    def boundary_data(self) -> BoundaryData:
        k, v = self.knots, self.values
        if k[0] > 0:
            q0, mu0 = 0.0, 0.0
        elif v[0] > 0:
            q0, mu0 = v[0], 0.0
        else:
            q0, mu0 = v[1] / k[1], 1.0
        if k[-1] < 1:
            q1, mu1 = 0.0, 0.0
        elif v[-1] > 0:
            q1, mu1 = v[-1], 0.0
        else:
            q1, mu1 = v[-2] / (1.0 - k[-2]), 1.0
        return BoundaryData(q0=q0, mu0=mu0, q1=q1, mu1=mu1)

    def _density(self, y, ybar):
        return np.interp(y, self.knots, self.values, left=0.0, right=0.0)

    def _breakpoints(self) -> List[float]:
        return list(self.knots)

    @property
    def _cumulative(self) -> np.ndarray:
        k = np.asarray(self.knots)
        v = np.asarray(self.values)
        return np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(k))])

    def cdf(self, y):
        k = np.asarray(self.knots)
        v = np.asarray(self.values)
        arr = np.clip(np.asarray(y, dtype=float), k[0], k[-1])
        idx = np.clip(np.searchsorted(k, arr, side="right") - 1, 0, len(k) - 2)
        h = k[idx + 1] - k[idx]
        u = arr - k[idx]
        out = self._cumulative[idx] + v[idx] * u + (v[idx + 1] - v[idx]) * u**2 / (2.0 * h)
        return _finish(y, np.clip(out, 0.0, 1.0))

    def quadrature_rule(self, n: int = 64):
        t, w = special.roots_legendre(max(4, n // (len(self.knots) - 1)))
        nodes, weights = [], []
        for lo, hi in zip(self.knots[:-1], self.knots[1:]):
            y = lo + (t + 1.0) * (hi - lo) / 2.0
            nodes.append(y)
            weights.append(w * (hi - lo) / 2.0 * self._density(y, 1.0 - y))
        nodes = np.concatenate(nodes)
        weights = np.concatenate(weights)
        return nodes, weights / np.sum(weights)

    def sample(self, rng, size=None):
        """Exact inverse-CDF sampling (the CDF is quadratic on each knot interval)."""
        k = np.asarray(self.knots)
        v = np.asarray(self.values)
        cum = self._cumulative
        u = rng.random(size) * cum[-1]
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(k) - 2)
        h = k[idx + 1] - k[idx]
        slope = (v[idx + 1] - v[idx]) / (2.0 * h)
        m = u - cum[idx]
        root = np.sqrt(np.maximum(v[idx] ** 2 + 4.0 * slope * m, 0.0))
        denom = v[idx] + root
        step = np.where(denom > 0, 2.0 * m / np.where(denom > 0, denom, 1.0), 0.0)
        y = np.clip(k[idx] + step, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
        return float(y) if size is None else y


BaseKernel = Annotated[
    Union[PointMassKernel, UniformKernel, BetaShapeKernel, TabulatedKernel],
    Field(discriminator="variant"),
]


class PhantomKernel(_KernelBase):
    """Mixture p_one*delta_1 + (1 - p_one)*remainder: divisions with no loss of size."""

    variant: Literal["phantom"] = "phantom"
    p_one: float = Field(ge=0, le=1)
    remainder: BaseKernel

    @property
    def atom_at_one(self) -> float:
        return self.p_one

    @property
    def boundary_data(self) -> Optional[BoundaryData]:
        bd = self.remainder.boundary_data
        if bd is None:
            return None
        scale = 1.0 - self.p_one
        return bd.model_copy(update={"q0": bd.q0 * scale, "q1": bd.q1 * scale})

    def moment(self, a: float) -> float:
        rest = self.remainder.moment(a)
        return math.inf if math.isinf(rest) else self.p_one + (1.0 - self.p_one) * rest

    def expect(self, g, points=()) -> float:
        return self.p_one * float(g(1.0)) + (1.0 - self.p_one) * self.remainder.expect(g, points)

    def quadrature_rule(self, n: int = 64):
        nodes, weights = self.remainder.quadrature_rule(n)
        return np.append(nodes, 1.0), np.append(weights * (1.0 - self.p_one), self.p_one)

    def sample(self, rng, size=None):
        draws = self.remainder.sample(rng, size)
        keep = rng.random(size) < self.p_one
        return np.where(keep, 1.0, draws) if size is not None else (1.0 if keep else draws)

    def cdf(self, y):
        arr = np.asarray(y, dtype=float)
        out = (1.0 - self.p_one) * np.asarray(self.remainder.cdf(arr)) + self.p_one * (arr >= 1.0)
        return _finish(y, out)

    def mean_log(self) -> float:
        return (1.0 - self.p_one) * self.remainder.mean_log()


Kernel = Annotated[
    Union[PointMassKernel, UniformKernel, BetaShapeKernel, TabulatedKernel, PhantomKernel],
    Field(discriminator="variant"),
]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def kernel_moment(kernel, a: float) -> float:
    """M(a) = integral of y^a Q(dy); +inf when the integral diverges."""
    return kernel.moment(a)


def sample_kernel(kernel, rng: np.random.Generator) -> float:
    """One draw of the relative daughter size."""
    return float(kernel.sample(rng))


def strip_phantom_jumps(beta, kernel):
    """Remove the atom of Q at 1 by thinning the fragmentation rate.

    Q = p*delta_1 + (1-p)*Q' gives the same generator as beta' = (1-p)*beta
    with kernel Q'.

    Returns:
        Tuple (beta', kernel') where kernel' has no atom at 1.

    Raises:
        DegenerateKernelError: if p = 1.
    """
    p_one = kernel.atom_at_one
    if p_one >= 1.0:
        raise DegenerateKernelError("kernel has all its mass at 1; the cell never divides")
    if not isinstance(kernel, PhantomKernel):
        return beta, kernel
    if p_one == 0.0:
        return beta, kernel.remainder
    return beta.scaled(1.0 - p_one), kernel.remainder


def strip_model(model: RateModel, kernel) -> Tuple[RateModel, object]:
    """Apply strip_phantom_jumps to a whole rate model."""
    beta, stripped = strip_phantom_jumps(model.beta, kernel)
    if beta is model.beta:
        return model, stripped
    return model.with_beta(beta, 1.0 - kernel.atom_at_one), stripped


def check_kernel_mass(kernel) -> float:
    """Total mass of Q; raises ModelValidationError when it is not 1."""
    mass = kernel.total_mass()
    if abs(mass - 1.0) > MASS_TOL:
        raise ModelValidationError(f"kernel mass is {mass:.12g}, expected 1")
    if kernel.atom_at_one > 0:
        raise ModelValidationError("kernel has an atom at 1; strip phantom jumps first")
    return mass


class MomentCheck(BaseModel):
    """Moment conditions M(a) < 1 and M(-b) < inf for a candidate (a, b)."""

    a: float
    b: float
    m_a: float
    m_minus_b: float

    @property
    def a_ok(self) -> bool:
        return self.m_a < 1.0

    @property
    def b_ok(self) -> bool:
        return math.isfinite(self.m_minus_b)

    @property
    def passed(self) -> bool:
        return self.a > 0 and self.b > 0 and self.a_ok and self.b_ok


def check_moment_assumptions(kernel, a: float, b: float) -> MomentCheck:
    return MomentCheck(a=a, b=b, m_a=kernel.moment(a), m_minus_b=kernel.moment(-b))
