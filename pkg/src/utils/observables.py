"""Test functions f fed to the generator Lf = tau*f' + beta*(int f(x*y) Q(dy) - f(x))."""

import math
from abc import ABC, abstractmethod
from typing import Callable, Optional

import numpy as np

from errors import DivergentIntegralError


KERNEL_CHUNK = 50_000


class Observable(ABC):
    """A differentiable function of the size with its kernel integral."""

    name: str = "f"

    @abstractmethod
    def value(self, x):
        """f(x), vectorized."""

    @abstractmethod
    def derivative(self, x: float) -> float:
        """f'(x)."""

    def kernel_term(self, kernel, x: float) -> float:
        """Integral of f(x*y) Q(dy)."""
        return kernel.expect(lambda y: float(self.value(x * y)), points=self.kernel_points(x))

    def kernel_points(self, x: float):
        return ()

    def kernel_terms(self, kernel, xs: np.ndarray, n: int = 64) -> np.ndarray:
        """Vectorized kernel integrals on many sizes with the kernel's quadrature rule."""
        nodes, weights = kernel.quadrature_rule(n)
        xs = np.asarray(xs, dtype=float)
        out = np.empty_like(xs)
        for start in range(0, xs.size, KERNEL_CHUNK):
            block = xs[start : start + KERNEL_CHUNK]
            out[start : start + KERNEL_CHUNK] = self.value(block[:, None] * nodes[None, :]) @ weights
        return out

    def derivatives(self, xs: np.ndarray) -> np.ndarray:
        return np.array([self.derivative(float(x)) for x in np.asarray(xs, dtype=float)])

    def check_integrable(self, kernel) -> None:
        """Raise DivergentIntegralError when the kernel integral of f is infinite."""


class ConstantObservable(Observable):
    """f = c; Lf vanishes identically."""

    def __init__(self, c: float = 1.0):
        self.c = c
        self.name = f"const({c:g})"

    def value(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.c) if np.ndim(x) else self.c

    def derivative(self, x: float) -> float:
        return 0.0

    def kernel_term(self, kernel, x: float) -> float:
        return self.c

    def kernel_terms(self, kernel, xs, n: int = 64):
        return np.full_like(np.asarray(xs, dtype=float), self.c)

    def derivatives(self, xs):
        return np.zeros_like(np.asarray(xs, dtype=float))


class PowerObservable(Observable):
    """f(x) = x^k; the kernel integral is x^k M(k)."""

    def __init__(self, k: float):
        self.k = k
        self.name = f"x^{k:g}"

    def value(self, x):
        return np.power(x, self.k) if np.ndim(x) else float(x) ** self.k

    def derivative(self, x: float) -> float:
        return self.k * x ** (self.k - 1.0)

    def derivatives(self, xs):
        return self.k * np.power(np.asarray(xs, dtype=float), self.k - 1.0)

    def check_integrable(self, kernel) -> None:
        if math.isinf(kernel.moment(self.k)):
            raise DivergentIntegralError(f"M({self.k:g})")

    def kernel_term(self, kernel, x: float) -> float:
        self.check_integrable(kernel)
        return x**self.k * kernel.moment(self.k)

    def kernel_terms(self, kernel, xs, n: int = 64):
        self.check_integrable(kernel)
        return np.power(np.asarray(xs, dtype=float), self.k) * kernel.moment(self.k)


class LogObservable(Observable):
    """f(x) = log x; the kernel integral is log x + E_Q[log y]."""

    name = "log x"

    def value(self, x):
        return np.log(x) if np.ndim(x) else math.log(x)

    def derivative(self, x: float) -> float:
        return 1.0 / x

    def derivatives(self, xs):
        return 1.0 / np.asarray(xs, dtype=float)

    def kernel_term(self, kernel, x: float) -> float:
        return math.log(x) + kernel.mean_log()

    def kernel_terms(self, kernel, xs, n: int = 64):
        return np.log(np.asarray(xs, dtype=float)) + kernel.mean_log()


class ExpTiltObservable(Observable):
    """f(x) = x^-eps * exp(eta * x^theta) for x >= 1."""

    def __init__(self, eps: float, eta: float, theta: float):
        self.eps = eps
        self.eta = eta
        self.theta = theta
        self.name = f"x^-{eps:g} exp({eta:g} x^{theta:g})"

    def value(self, x):
        if np.ndim(x):
            x = np.asarray(x, dtype=float)
            with np.errstate(over="ignore"):
                return np.power(x, -self.eps) * np.exp(self.eta * np.power(x, self.theta))
        with np.errstate(over="ignore"):
            return float(x ** (-self.eps) * np.exp(self.eta * x**self.theta))

    def log_derivative(self, x: float) -> float:
        return -self.eps / x + self.eta * self.theta * x ** (self.theta - 1.0)

    def derivative(self, x: float) -> float:
        return self.value(x) * self.log_derivative(x)

    def check_integrable(self, kernel) -> None:
        if math.isinf(kernel.moment(-self.eps)):
            raise DivergentIntegralError(f"M(-{self.eps:g})")

    def kernel_points(self, x: float):
        # the integrand concentrates in a layer of width ~1/(eta*theta*x^theta) below y=1
        scale = self.eta * self.theta * x**self.theta
        if scale <= 0:
            return ()
        return tuple(1.0 - k / scale for k in (1.0, 10.0, 50.0) if k / scale < 0.5)

    def kernel_ratio(self, kernel, x: float) -> float:
        """Integral of y^-eps exp(eta x^theta (y^theta - 1)) Q(dy), i.e. K f(x) / f(x)."""
        self.check_integrable(kernel)
        lift = self.eta * x**self.theta
        return kernel.expect(
            lambda y: y ** (-self.eps) * math.exp(lift * (y**self.theta - 1.0)),
            points=self.kernel_points(x),
        )

    def kernel_term(self, kernel, x: float) -> float:
        return self.value(x) * self.kernel_ratio(kernel, x)


class BumpObservable(Observable):
    """Smooth bump exp(-1/(1-u^2)) in u = (log x - log center)/width, zero for |u| >= 1."""

    def __init__(self, center: float = 1.0, width: float = 1.0):
        self.center = center
        self.width = width
        self.name = f"bump({center:g},{width:g})"

    def _u(self, x):
        return (np.log(x) - math.log(self.center)) / self.width

    def value(self, x):
        u = np.asarray(self._u(x), dtype=float)
        inside = np.abs(u) < 1.0
        safe = np.where(inside, u, 0.0)
        out = np.where(inside, np.exp(-1.0 / (1.0 - safe**2)), 0.0)
        return out if np.ndim(x) else float(out)

    def derivative(self, x: float) -> float:
        u = float(self._u(x))
        if abs(u) >= 1.0:
            return 0.0
        return self.value(x) * (-2.0 * u / (1.0 - u * u) ** 2) / (self.width * x)

    def derivatives(self, xs):
        xs = np.asarray(xs, dtype=float)
        u = self._u(xs)
        inside = np.abs(u) < 1.0
        safe = np.where(inside, u, 0.0)
        slope = -2.0 * safe / (1.0 - safe**2) ** 2 / (self.width * xs)
        return np.where(inside, self.value(xs) * slope, 0.0)

    def kernel_points(self, x: float):
        lo = self.center * math.exp(-self.width) / x
        hi = self.center * math.exp(self.width) / x
        return tuple(p for p in (lo, self.center / x, hi) if 0.0 < p < 1.0)


class CallableObservable(Observable):
    """User function; the derivative falls back to a 5-point finite difference."""

    def __init__(
        self,
        fn: Callable[[float], float],
        name: str = "f",
        derivative: Optional[Callable[[float], float]] = None,
        rel_step: float = 1e-5,
    ):
        self.fn = fn
        self.name = name
        self._derivative = derivative
        self.rel_step = rel_step

    def value(self, x):
        if np.ndim(x):
            return np.vectorize(self.fn, otypes=[float])(x)
        return float(self.fn(x))

    def derivative(self, x: float) -> float:
        if self._derivative is not None:
            return float(self._derivative(x))
        h = x * self.rel_step
        f = self.fn
        return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)
