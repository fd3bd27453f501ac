"""Event-driven simulation of the cell process and Monte Carlo generator checks."""

import bisect
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import DomainError, ModelInconsistencyError
from flow import FlowMap
from lyapunov import apply_generator, require_positive_recurrent
from models import BalanceClassification, Provenance
from rates import RateModel, sample_kernel
from utils.observables import Observable
from utils.random_streams import child_sequences


logger = logging.getLogger("pdmp")

LOG_SPACE_LOW = 1e-100
LOG_SPACE_HIGH = 1e100
PILOT_JUMPS = 2000


def apply_jump(x_pre: float, y: float) -> float:
    """Post-jump size y * x_pre, through logs far from 1."""
    if x_pre < LOG_SPACE_LOW or x_pre > LOG_SPACE_HIGH:
        x = math.exp(math.log(x_pre) + math.log(y))
    else:
        x = x_pre * y
    if not (0.0 < x < math.inf):
        raise ModelInconsistencyError(f"size left the representable range after a jump from {x_pre:.6g}")
    return x


class JumpEvent(BaseModel):
    """A division at time t from size x_pre, keeping the fraction y."""

    model_config = ConfigDict(frozen=True)

    t: float
    x_pre: float
    y: float

    @property
    def x_post(self) -> float:
        return apply_jump(self.x_pre, self.y)


class Trajectory(BaseModel):
    """A realized path: flow between events, multiplication by y at each event."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x0: float = Field(gt=0)
    horizon: float = Field(gt=0)
    events: List[JumpEvent]
    model: RateModel

    @property
    def jump_times(self) -> List[float]:
        return [e.t for e in self.events]

    def value_at(self, t: float) -> float:
        """X_t for 0 <= t <= horizon (right-continuous at the events)."""
        if t < 0 or t > self.horizon:
            raise DomainError(f"t={t} outside [0, {self.horizon}]")
        k = bisect.bisect_right(self.jump_times, t)
        if k == 0:
            start_t, start_x = 0.0, self.x0
        else:
            event = self.events[k - 1]
            start_t, start_x = event.t, event.x_post
        return FlowMap(self.model).flow(start_x, t - start_t)

    def rows(self, span: Optional[float] = None) -> List[Tuple[float, float, float, float]]:
        """(t, x_pre, y, x_post) rows for export, optionally up to time span."""
        return [
            (e.t, e.x_pre, e.y, e.x_post)
            for e in self.events
            if span is None or e.t <= span
        ]


class EmpiricalDistribution(BaseModel):
    """Weighted positive samples estimating the stationary law."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    samples: np.ndarray
    weights: np.ndarray
    provenance: Optional[Provenance] = None

    @model_validator(mode="after")
    def _check(self) -> "EmpiricalDistribution":
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("samples must be a nonempty 1-d array")
        if self.weights.shape != self.samples.shape:
            raise ValueError("one weight per sample is required")
        if np.any(~(self.samples > 0)) or np.any(~np.isfinite(self.samples)):
            raise ValueError("samples must be positive and finite")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        return self

    @classmethod
    def from_samples(cls, samples, provenance: Optional[Provenance] = None) -> "EmpiricalDistribution":
        samples = np.asarray(samples, dtype=float)
        return cls(samples=samples, weights=np.full(samples.size, 1.0 / samples.size), provenance=provenance)

    @property
    def count(self) -> int:
        return int(self.samples.size)

    def mean(self, g: Callable) -> float:
        return float(np.dot(self.weights, g(self.samples)))

    def log_edges(self, bins: int) -> np.ndarray:
        lo, hi = float(self.samples.min()), float(self.samples.max())
        if hi <= lo:
            hi = lo * (1.0 + 1e-9)
        return np.geomspace(lo, hi, bins + 1)

    def histogram(self, bins: int = 200, edges: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(edges, mass) on log-spaced bins over the observed range (or the given edges)."""
        edges = self.log_edges(bins) if edges is None else np.asarray(edges, dtype=float)
        mass, _ = np.histogram(self.samples, bins=edges, weights=self.weights)
        return edges, mass

    def density(self, edges: np.ndarray) -> np.ndarray:
        _, mass = self.histogram(edges=edges)
        return mass / np.diff(edges)

    def l1_distance(self, other: "EmpiricalDistribution", bins: int = 100) -> float:
        """L1 distance between the two histograms on shared log bins."""
        lo = min(self.samples.min(), other.samples.min())
        hi = max(self.samples.max(), other.samples.max())
        edges = np.geomspace(lo, hi, bins + 1)
        return float(np.sum(np.abs(self.histogram(edges=edges)[1] - other.histogram(edges=edges)[1])))


def simulate_trajectory(
    model: RateModel,
    kernel,
    x0: float,
    horizon: float,
    rng: np.random.Generator,
    flow_map: Optional[FlowMap] = None,
    sampler: str = "inversion",
) -> Trajectory:
    """Exact-in-law path on [0, horizon]: alternate jump times and kernel draws."""
    if not x0 > 0 or not horizon > 0:
        raise DomainError("simulate_trajectory needs x0 > 0 and horizon > 0")
    fm = flow_map or FlowMap(model)
    draw = fm.sample_jump if sampler == "inversion" else fm.sample_jump_thinning
    t, x = 0.0, float(x0)
    events: List[JumpEvent] = []
    while True:
        wait, x_pre = draw(x, rng)
        if t + wait > horizon:
            break
        t += wait
        y = sample_kernel(kernel, rng)
        events.append(JumpEvent(t=t, x_pre=x_pre, y=y))
        x = apply_jump(x_pre, y)
    return Trajectory(x0=x0, horizon=horizon, events=events, model=model)


def default_stride(model: RateModel, x_bar: float) -> float:
    """1 / max(beta(x_bar), tau(x_bar)/x_bar): one jump or one doubling of size."""
    return 1.0 / max(model.beta(x_bar), model.tau(x_bar) / x_bar)


def pilot_median(model: RateModel, kernel, x0: float, seed_seq, sampler: str = "inversion") -> float:
    """Median post-jump size over a short pilot run."""
    rng = np.random.default_rng(seed_seq)
    fm = FlowMap(model)
    draw = fm.sample_jump if sampler == "inversion" else fm.sample_jump_thinning
    x = x0
    sizes = np.empty(PILOT_JUMPS)
    for i in range(PILOT_JUMPS):
        _, x_pre = draw(x, rng)
        x = apply_jump(x_pre, sample_kernel(kernel, rng))
        sizes[i] = x
    return float(np.median(sizes[PILOT_JUMPS // 5 :]))


def run_chain(
    model: RateModel,
    kernel,
    x0: float,
    horizon: float,
    burn_in: float,
    stride: float,
    seed_seq,
    sampler: str = "inversion",
) -> np.ndarray:
    """X at times burn_in, burn_in + stride, ... <= horizon along one chain."""
    rng = np.random.default_rng(seed_seq)
    fm = FlowMap(model)
    draw = fm.sample_jump if sampler == "inversion" else fm.sample_jump_thinning
    times = burn_in + stride * np.arange(int(math.floor((horizon - burn_in) / stride)) + 1)
    out = np.empty(times.size)
    t, x, k = 0.0, float(x0), 0
    while k < times.size:
        wait, x_pre = draw(x, rng)
        t_jump = t + wait
        while k < times.size and times[k] < t_jump:
            out[k] = fm.flow(x, times[k] - t)
            k += 1
        t = t_jump
        x = apply_jump(x_pre, sample_kernel(kernel, rng))
    return out


def _run_chain_star(args) -> np.ndarray:
    return run_chain(*args)


def sample_stationary(
    model: RateModel,
    kernel,
    horizon: float,
    seed: int,
    burn_in: Optional[float] = None,
    stride: Optional[float] = None,
    n_chains: Optional[int] = None,
    x0: float = 1.0,
    sampler: str = "inversion",
    classification: Optional[BalanceClassification] = None,
    force: bool = False,
    max_workers: Optional[int] = None,
) -> EmpiricalDistribution:
    """Pooled ergodic-average samples over independent chains.

    Chain i uses the i-th child of SeedSequence(seed); the pilot run that sets
    the default stride uses child n_chains. Pooling is in chain order.

    Raises:
        NotPositiveRecurrentError: if the model is not positive recurrent and
            force is not set.
        DomainError: if burn_in >= horizon.
    """
    burn_in = horizon / 5.0 if burn_in is None else burn_in
    if burn_in >= horizon:
        raise DomainError(f"burn_in ({burn_in}) must be smaller than horizon ({horizon})")
    if not force:
        require_positive_recurrent(model, kernel, classification)
    n_chains = n_chains or os.cpu_count() or 1
    sequences = child_sequences(seed, n_chains + 1)
    if stride is None:
        x_bar = pilot_median(model, kernel, x0, sequences[-1], sampler)
        stride = default_stride(model, x_bar)
        logger.info(f"pilot median size {x_bar:.4g}, stride {stride:.4g}")
    jobs = [(model, kernel, x0, horizon, burn_in, stride, sequences[i], sampler) for i in range(n_chains)]
    workers = max_workers if max_workers is not None else n_chains
    if workers <= 1 or n_chains == 1:
        chains = [_run_chain_star(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chains = list(pool.map(_run_chain_star, jobs))
    samples = np.concatenate(chains)
    if np.any(~(samples > 0)) or np.any(~np.isfinite(samples)):
        raise ModelInconsistencyError("a chain produced a size outside (0, inf)")
    logger.info(f"pooled {samples.size} samples from {n_chains} chains")
    provenance = Provenance(
        seed=seed, horizon=horizon, burn_in=burn_in, stride=stride, n_chains=n_chains, x0=x0
    )
    return EmpiricalDistribution.from_samples(samples, provenance)


def advance(
    model: RateModel,
    kernel,
    x: float,
    h: float,
    rng: np.random.Generator,
    n: int,
    flow_map: Optional[FlowMap] = None,
) -> np.ndarray:
    """n independent draws of X_h given X_0 = x.

    Paths whose first exponential clock exceeds Lambda_x(h) share the
    deterministic value phi_x(h); only the jumping paths are stepped one by one.
    """
    fm = flow_map or FlowMap(model)
    clocks = rng.standard_exponential(n)
    lam_h = fm.hazard(x, h)
    out = np.full(n, fm.flow(x, h))
    for i in np.flatnonzero(clocks < lam_h):
        wait, x_pre = fm.jump_from_exponential(x, float(clocks[i]))
        t = wait
        size = apply_jump(x_pre, sample_kernel(kernel, rng))
        while True:
            wait, x_pre = fm.sample_jump(size, rng)
            if t + wait > h:
                out[i] = fm.flow(size, h - t)
                break
            t += wait
            size = apply_jump(x_pre, sample_kernel(kernel, rng))
    return out


def generator_residual(
    model: RateModel,
    kernel,
    f: Observable,
    x: float,
    h: float = 1e-3,
    n: int = 1_000_000,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, float]:
    """Monte Carlo (E[f(X_h) | X_0 = x] - f(x))/h - Lf(x) with its standard error."""
    rng = rng if rng is not None else np.random.default_rng()
    target = apply_generator(model, kernel, f, x)
    increments = (np.asarray(f.value(advance(model, kernel, x, h, rng, n)), dtype=float) - f.value(x)) / h
    estimate = float(np.mean(increments)) - target
    stderr = float(np.std(increments, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return estimate, stderr
