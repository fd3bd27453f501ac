"""Finite-volume solver for the conservative growth-fragmentation equation.

du/dt = -d(tau u)/dx - beta u + int beta(z) kappa(x, z) u(z) dz on a log grid:
first-order upwind transport, explicit Euler, and a dense gain operator built
once from the kernel CDF.
"""

import logging
import math
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import CFLViolationError, ConvergenceError, DomainError
from lyapunov import require_positive_recurrent
from models import BalanceClassification
from pdmp import EmpiricalDistribution
from rates import PointMassKernel, RateModel


logger = logging.getLogger("pde")

DEFAULT_CFL = 0.9


class SizeGrid(BaseModel):
    """Log-spaced cell edges on [x_min, x_max]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    edges: np.ndarray

    @model_validator(mode="after")
    def _check(self) -> "SizeGrid":
        if self.edges.ndim != 1 or self.edges.size < 3:
            raise ValueError("a grid needs at least two cells")
        if not self.edges[0] > 0 or np.any(np.diff(self.edges) <= 0):
            raise ValueError("grid edges must be positive and strictly increasing")
        return self

    @classmethod
    def log_spaced(cls, x_min: float, x_max: float, cells: int) -> "SizeGrid":
        return cls(edges=np.geomspace(x_min, x_max, cells + 1))

    @classmethod
    def dyadic(cls, x_min: float, x_max: float, per_octave: int) -> "SizeGrid":
        """Edges x_min * 2^(i/k); x_max is rounded up to a whole cell.

        Halving a cell center then lands exactly on another center.
        """
        cells = int(math.ceil(per_octave * math.log2(x_max / x_min) - 1e-9))
        return cls(edges=x_min * np.power(2.0, np.arange(cells + 1) / per_octave))

    @property
    def x_min(self) -> float:
        return float(self.edges[0])

    @property
    def x_max(self) -> float:
        return float(self.edges[-1])

    @property
    def centers(self) -> np.ndarray:
        return np.sqrt(self.edges[:-1] * self.edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def size(self) -> int:
        return self.edges.size - 1


class DensityField(BaseModel):
    """Cell averages of u(t, .) with the mass that has left the grid so far."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SizeGrid
    values: np.ndarray
    time: float = 0.0
    leaked: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "DensityField":
        if self.values.shape != (self.grid.size,):
            raise ValueError("one value per cell is required")
        if np.any(self.values < 0):
            raise ValueError("density values must be nonnegative")
        return self

    def mass(self) -> float:
        return float(np.dot(self.values, self.grid.widths))

    def normalized(self) -> "DensityField":
        return self.model_copy(update={"values": self.values / self.mass()})

    def moment(self, g) -> float:
        """Midpoint quadrature of g against u."""
        return float(np.sum(g(self.grid.centers) * self.values * self.grid.widths))

    def mass_on(self, edges: np.ndarray) -> np.ndarray:
        """Mass of the piecewise-constant density in each bin of edges."""
        cumulative = np.concatenate([[0.0], np.cumsum(self.values * self.grid.widths)])
        at = np.interp(np.asarray(edges, dtype=float), self.grid.edges, cumulative)
        return np.diff(at)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n draws from the normalized field (uniform inside each cell)."""
        masses = self.values * self.grid.widths
        cells = rng.choice(self.grid.size, size=n, p=masses / masses.sum())
        return self.grid.edges[cells] + rng.random(n) * self.grid.widths[cells]

    def rows(self) -> List[Tuple[float, float]]:
        """(x_center, G) export rows."""
        return list(zip(self.grid.centers.tolist(), self.values.tolist()))


def gain_weights(kernel, grid: SizeGrid) -> Tuple[np.ndarray, np.ndarray]:
    """W[k, j]: fraction of a division from cell k landing in cell j, and the fraction lost below x_min.

    Mothers sit at the cell centers. Point masses are split linearly in log x
    between the two centers around r * x_k.
    """
    centers = grid.centers
    n = grid.size
    if isinstance(kernel, PointMassKernel):
        W = np.zeros((n, n))
        lost = np.zeros(n)
        log_c = np.log(centers)
        for k in range(n):
            target = kernel.r * centers[k]
            if target < grid.x_min:
                lost[k] = 1.0
                continue
            pos = math.log(target)
            j = int(np.searchsorted(log_c, pos, side="right")) - 1
            if j < 0:
                W[k, 0] = 1.0
            else:
                upper = (pos - log_c[j]) / (log_c[j + 1] - log_c[j])
                W[k, j] += 1.0 - upper
                if upper > 0:
                    W[k, j + 1] += upper
        return W, lost
    ratios = np.minimum(grid.edges[None, :] / centers[:, None], 1.0)
    cdf = np.asarray(kernel.cdf(ratios))
    return np.diff(cdf, axis=1), cdf[:, 0]


class GrowthFragmentationSolver:
    """Explicit upwind stepper for one (model, kernel, grid).

    With closed=True nothing leaves the grid: fragments below x_min go to the
    first cell and there is no outflow at x_max, so the discrete operator has
    an exact stationary vector.
    """

    def __init__(self, model: RateModel, kernel, grid: SizeGrid, cfl: float = DEFAULT_CFL, closed: bool = False):
        self.model = model
        self.kernel = kernel
        self.grid = grid
        self.cfl = cfl
        widths = grid.widths
        self._outflow = np.asarray(model.tau(grid.edges[1:])) / widths
        if closed:
            self._outflow[-1] = 0.0
        self._beta = np.asarray(model.beta(grid.centers))
        W, lost = gain_weights(kernel, grid)
        if closed:
            W[:, 0] += lost
            lost = np.zeros_like(lost)
        division_mass = self._beta * widths
        # gain[j] = sum_k W[k, j] beta_k u_k dx_k / dx_j, fixed summation order per row
        self._gain = np.ascontiguousarray((W * division_mass[:, None]).T / widths[:, None])
        self._lost = lost * division_mass
        self._rate = self._outflow + self._beta
        self.max_dt = self.cfl / float(np.max(self._rate))
        logger.info(f"solver on {grid.size} cells, max stable dt {self.max_dt:.3g}")

    def rhs(self, u: np.ndarray) -> np.ndarray:
        """du/dt for cell averages u."""
        flux = self._outflow * u
        inflow = np.empty_like(u)
        inflow[0] = 0.0
        inflow[1:] = flux[:-1] * self.grid.widths[:-1] / self.grid.widths[1:]
        return inflow - flux - self._beta * u + self._gain @ u

    def leak_rate(self, u: np.ndarray) -> float:
        """Mass per unit time leaving through x_max or falling below x_min."""
        return float(self._outflow[-1] * u[-1] * self.grid.widths[-1] + np.dot(self._lost, u))

    def step(self, field: DensityField, dt: float) -> DensityField:
        if dt > self.max_dt * (1.0 + 1e-12):
            raise CFLViolationError(dt, self.max_dt)
        u = field.values
        new = np.maximum(u + dt * self.rhs(u), 0.0)
        return DensityField(
            grid=field.grid, values=new, time=field.time + dt, leaked=field.leaked + dt * self.leak_rate(u)
        )

    def residual(self, u: np.ndarray) -> float:
        """L1 norm of du/dt for the normalized field."""
        mass = float(np.dot(u, self.grid.widths))
        return float(np.dot(np.abs(self.rhs(u)), self.grid.widths)) / mass

    def march_to_steady(
        self,
        field: DensityField,
        tol: float,
        max_steps: int,
        check_every: int = 100,
        marching: Literal["local", "global"] = "local",
    ) -> Tuple[DensityField, List[float]]:
        """Iterate until the residual drops below tol.

        "global" is physical time with the largest stable dt. "local" gives each
        cell its own CFL-limited pseudo-time step; the fixed point is the same.
        """
        dt = self.cfl / self._rate if marching == "local" else self.max_dt
        u = field.values / field.mass()
        history: List[float] = []
        for step in range(1, max_steps + 1):
            u = np.maximum(u + dt * self.rhs(u), 0.0)
            if step % check_every == 0:
                u = u / float(np.dot(u, self.grid.widths))
                history.append(self.residual(u))
                if history[-1] < tol:
                    logger.info(f"steady state after {step} steps, residual {history[-1]:.3g}")
                    time = step * self.max_dt if marching == "global" else field.time
                    steady = DensityField(grid=self.grid, values=u, time=time, leaked=0.0)
                    return steady, history
        raise ConvergenceError(
            f"no steady state within {max_steps} steps (last residual {history[-1] if history else math.nan:.3g})",
            residual_history=history,
        )


def step_conservative(field: DensityField, model: RateModel, kernel, dt: float) -> DensityField:
    """One explicit step.

    Raises:
        CFLViolationError: if dt exceeds the largest stable step.
    """
    return GrowthFragmentationSolver(model, kernel, field.grid).step(field, dt)


def initial_field(grid: SizeGrid) -> DensityField:
    """Unit-mass log-normal bump centered at x = 1."""
    c = grid.centers
    u = np.exp(-0.5 * np.log(c) ** 2) / c
    field = DensityField(grid=grid, values=u)
    return field.normalized()


def steady_state(
    model: RateModel,
    kernel,
    grid: SizeGrid,
    tol: float = 1e-8,
    initial: Optional[DensityField] = None,
    max_steps: int = 200_000,
    check_every: int = 100,
    marching: Literal["local", "global"] = "local",
    cfl: float = DEFAULT_CFL,
    classification: Optional[BalanceClassification] = None,
    force: bool = False,
) -> Tuple[DensityField, List[float]]:
    """Normalized stationary profile on the grid and the residual history.

    Raises:
        NotPositiveRecurrentError: if the model is not positive recurrent.
        ConvergenceError: if tol is not reached within max_steps.
    """
    field = initial if initial is not None else initial_field(grid)
    if math.isinf(tol):
        return field, []
    if not force:
        require_positive_recurrent(model, kernel, classification)
    solver = GrowthFragmentationSolver(model, kernel, grid, cfl, closed=True)
    return solver.march_to_steady(field, tol, max_steps, check_every, marching)


def compare_distributions(
    field: DensityField,
    dist: EmpiricalDistribution,
    x_lo: Optional[float] = None,
    x_hi: Optional[float] = None,
    bins: int = 100,
) -> float:
    """L1 distance between the PDE density and the sample histogram on their common range.

    Both are binned on the same log bins and renormalized to the common range.

    Raises:
        DomainError: if the supports do not overlap.
    """
    lo = max(field.grid.x_min, float(dist.samples.min()), x_lo if x_lo is not None else 0.0)
    hi = min(field.grid.x_max, float(dist.samples.max()), x_hi if x_hi is not None else math.inf)
    if not lo < hi:
        raise DomainError(f"supports do not overlap (common range [{lo:.3g}, {hi:.3g}])")
    edges = np.geomspace(lo, hi, bins + 1)
    p = field.mass_on(edges)
    _, q = dist.histogram(edges=edges)
    if p.sum() <= 0 or q.sum() <= 0:
        raise DomainError("no mass on the common range")
    return float(np.sum(np.abs(p / p.sum() - q / q.sum())))
