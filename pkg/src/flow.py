"""Deterministic growth flow y' = tau(y), its inverse and the jump hazard along it."""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, optimize

from errors import DomainError, FlowExplosionError, ModelInconsistencyError
from rates import ConstantRate, PowerRate, RateModel, TwoTermRate


logger = logging.getLogger("flow")

MAX_THINNING_PROPOSALS = 1_000_000
_HUGE = 1e300


def _single_power(rate) -> Optional[Tuple[float, float]]:
    """(c, p) when the rate is exactly c*x^p, else None."""
    if isinstance(rate, ConstantRate):
        return rate.c, 0.0
    if isinstance(rate, PowerRate):
        return rate.c, rate.p
    if isinstance(rate, TwoTermRate) and len(rate.terms) == 1:
        return rate.terms[0]
    return None


class FlowMap:
    """Flow of the growth ODE for one rate model.

    Constant and pure-power tau use closed forms; everything else goes through
    DOP853 with the configured tolerances.
    """

    def __init__(self, model: RateModel, rtol: float = 1e-10, atol: float = 1e-12):
        self.model = model
        self.rtol = rtol
        self.atol = atol
        self._tau_power = _single_power(model.tau)
        beta_terms = getattr(model.beta, "terms", None)
        # size hazard has a closed form when tau is one power and beta a power sum
        self._closed_hazard = self._tau_power is not None and beta_terms is not None

    # -- flow ---------------------------------------------------------------

    def explosion_time(self, z: float) -> float:
        """Time for the flow from z to reach +inf; +inf when it never does."""
        self._check_size(z)
        if self._tau_power is not None:
            c, p = self._tau_power
            return z ** (1.0 - p) / ((p - 1.0) * c) if p > 1 else math.inf
        if self.model.tau_asym.exp_inf <= 1:
            return math.inf
        tau = self.model.tau
        return integrate.quad(lambda s: math.exp(s) / tau(math.exp(s)), math.log(z), math.inf)[0]

    def flow(self, z: float, t: float) -> float:
        """phi_z(t), the size at time t of a cell of size z growing without jumps."""
        self._check_size(z)
        if t < 0:
            raise DomainError(f"time must be nonnegative, got {t}")
        if t == 0:
            return float(z)
        horizon = self.explosion_time(z)
        if t >= horizon:
            raise FlowExplosionError(horizon, requested=t)
        if self._tau_power is not None:
            c, p = self._tau_power
            if p == 0:
                return z + c * t
            if p == 1:
                return z * math.exp(c * t)
            return (z ** (1.0 - p) + (1.0 - p) * c * t) ** (1.0 / (1.0 - p))
        sol = integrate.solve_ivp(
            lambda _, y: [self.model.tau(y[0])],
            (0.0, t),
            [z],
            method="DOP853",
            rtol=self.rtol,
            atol=self.atol,
        )
        if sol.status != 0:
            raise FlowExplosionError(min(horizon, float(sol.t[-1])), requested=t)
        return float(sol.y[0, -1])

    def flow_inverse(self, z: float, x: float) -> float:
        """Time needed to grow from z to x: the integral of 1/tau over [z, x]."""
        self._check_size(z)
        if x < z:
            raise DomainError(f"flow_inverse needs x >= z, got x={x}, z={z}")
        if x == z:
            return 0.0
        if self._tau_power is not None:
            c, p = self._tau_power
            if p == 0:
                return (x - z) / c
            if p == 1:
                return math.log(x / z) / c
            if math.isinf(x):
                return self.explosion_time(z)
            return (x ** (1.0 - p) - z ** (1.0 - p)) / ((1.0 - p) * c)
        tau = self.model.tau
        value, _ = integrate.quad(
            lambda s: math.exp(s) / tau(math.exp(s)),
            math.log(z),
            math.log(x),
            epsabs=0.0,
            epsrel=1e-11,
            limit=200,
        )
        return value

    # -- hazard -------------------------------------------------------------

    def size_hazard(self, z: float, x: float) -> float:
        """Integral of beta/tau over [z, x]: the hazard accumulated while growing from z to x."""
        if x <= z:
            return 0.0
        if self._closed_hazard:
            c, p = self._tau_power
            total = 0.0
            for cj, pj in self.model.beta.terms:
                q = pj - p + 1.0
                if q == 0:
                    total += cj / c * math.log(x / z)
                else:
                    total += cj / c * (x**q - z**q) / q
            return total
        model = self.model
        value, _ = integrate.quad(
            lambda s: math.exp(s) * model.beta(math.exp(s)) / model.tau(math.exp(s)),
            math.log(z),
            math.log(x),
            epsabs=0.0,
            epsrel=1e-11,
            limit=200,
        )
        return value

    def hazard_limit(self, z: float) -> float:
        """Total hazard along the whole flow from z; finite means a jump may never occur."""
        self._check_size(z)
        if self._closed_hazard:
            c, p = self._tau_power
            total = 0.0
            for cj, pj in self.model.beta.terms:
                q = pj - p + 1.0
                if q >= 0:
                    return math.inf
                total += -cj / c * z**q / q
            return total
        if self.model.beta_asym.exp_inf - self.model.tau_asym.exp_inf >= -1:
            return math.inf
        model = self.model
        return integrate.quad(
            lambda s: math.exp(s) * model.beta(math.exp(s)) / model.tau(math.exp(s)),
            math.log(z),
            math.inf,
        )[0]

    def hazard(self, z: float, t: float) -> float:
        """Lambda_z(t), the integrated jump intensity along the flow up to time t."""
        self._check_size(z)
        if t < 0:
            raise DomainError(f"time must be nonnegative, got {t}")
        if t == 0:
            return 0.0
        if self._closed_hazard:
            return self.size_hazard(z, self.flow(z, t))
        horizon = self.explosion_time(z)
        if t >= horizon:
            raise FlowExplosionError(horizon, requested=t)
        sol = integrate.solve_ivp(
            self._augmented, (0.0, t), [z, 0.0], method="DOP853", rtol=self.rtol, atol=self.atol
        )
        if sol.status != 0:
            raise FlowExplosionError(min(horizon, float(sol.t[-1])), requested=t)
        return float(sol.y[1, -1])

    def _augmented(self, _, state):
        y = state[0]
        return [self.model.tau(y), self.model.beta(y)]

    # -- jump times ---------------------------------------------------------

    def jump_from_exponential(self, z: float, e: float) -> Tuple[float, float]:
        """Jump time T and pre-jump size with Lambda_z(T) = e.

        Raises:
            ModelInconsistencyError: if the whole flow accumulates less than e.
        """
        self._check_size(z)
        if self._closed_hazard:
            if self.hazard_limit(z) <= e:
                raise ModelInconsistencyError(
                    f"hazard from z={z:.6g} is bounded by {self.hazard_limit(z):.6g} < {e:.6g}; "
                    "the cell may never divide (balance at inf violated)"
                )
            x = self._invert_size_hazard(z, e)
            return self.flow_inverse(z, x), x
        return self._jump_by_ode(z, e)

    def _invert_size_hazard(self, z: float, e: float) -> float:
        c, p = self._tau_power
        terms = self.model.beta.terms
        if len(terms) == 1:
            cj, pj = terms[0]
            q = pj - p + 1.0
            if q == 0:
                return z * math.exp(e * c / cj)
            base = z**q + q * e * c / cj
            return base ** (1.0 / q)
        hi = 2.0 * z
        while self.size_hazard(z, hi) < e:
            hi *= 2.0
            if hi > _HUGE:
                raise ModelInconsistencyError(f"no jump from z={z:.6g}: hazard never reaches {e:.6g}")
        lo = hi / 2.0 if hi > 2.0 * z else z
        return optimize.brentq(
            lambda x: self.size_hazard(z, x) - e, lo, hi, xtol=1e-300, rtol=1e-13, maxiter=200
        )

    def _jump_by_ode(self, z: float, e: float) -> Tuple[float, float]:
        """Integrate (y, Lambda) on geometrically growing brackets until Lambda hits e."""

        def reached(_, state):
            return state[1] - e

        reached.terminal = True
        reached.direction = 1
        horizon = self.explosion_time(z)
        t0, state, span = 0.0, [z, 0.0], 1.0
        while True:
            t1 = t0 + span if t0 + span < horizon else t0 + 0.5 * (horizon - t0)
            sol = integrate.solve_ivp(
                self._augmented,
                (t0, t1),
                state,
                method="DOP853",
                rtol=self.rtol,
                atol=self.atol,
                events=reached,
            )
            if sol.status == 1:
                return float(sol.t_events[0][0]), float(sol.y_events[0][0][0])
            t0, state = float(sol.t[-1]), list(sol.y[:, -1])
            if sol.status == -1 or state[0] > _HUGE or horizon - t0 < 1e-12 * max(1.0, t0):
                raise ModelInconsistencyError(
                    f"no jump from z={z:.6g} before the flow leaves the representable range "
                    f"(hazard {state[1]:.6g} < {e:.6g})"
                )
            span *= 2.0

    def sample_jump(self, z: float, rng: np.random.Generator) -> Tuple[float, float]:
        """Draw (T, pre-jump size) by hazard inversion."""
        return self.jump_from_exponential(z, float(rng.standard_exponential()))

    def sample_jump_time(self, z: float, rng: np.random.Generator, method: str = "inversion") -> float:
        """First jump time from size z, P(T > t) = exp(-Lambda_z(t))."""
        if method == "inversion":
            return self.sample_jump(z, rng)[0]
        if method == "thinning":
            return self.sample_jump_thinning(z, rng)[0]
        raise ValueError(f"unknown jump-time method: {method}")

    def sample_jump_thinning(self, z: float, rng: np.random.Generator) -> Tuple[float, float]:
        """Thinning with a local majorant of beta on windows where the size doubles."""
        self._check_size(z)
        t0, x0 = 0.0, float(z)
        beta = self.model.beta
        for _ in range(MAX_THINNING_PROPOSALS):
            x1 = 2.0 * x0
            if x1 > _HUGE:
                break
            width = self.flow_inverse(x0, x1)
            bound = beta.sup_on(x0, x1)
            s = 0.0
            while True:
                s += rng.standard_exponential() / bound
                if s >= width:
                    break
                x = self.flow(x0, s)
                if rng.random() * bound <= beta(x):
                    return t0 + s, x
            t0, x0 = t0 + width, x1
        raise ModelInconsistencyError(f"thinning from z={z:.6g} found no jump before the size overflowed")

    @staticmethod
    def _check_size(z: float) -> None:
        if not z > 0:
            raise DomainError(f"sizes must be positive, got {z!r}")
