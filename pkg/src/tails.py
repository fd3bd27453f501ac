"""Tail exponents of the stationary law: predictions, fits and stationarity residuals."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from errors import DivergentIntegralError, ModelValidationError, TailWindowError
from lyapunov import generator_values
from models import (
    LeftTailFit,
    RightTailFit,
    StationarityResidual,
    TailComparisonRow,
    TailFit,
    TailPrediction,
)
from pdmp import EmpiricalDistribution
from rates import RateModel
from utils.observables import BumpObservable, LogObservable, Observable, PowerObservable
from utils.random_streams import child_sequences


logger = logging.getLogger("tails")

MIN_WINDOW = 200
LEFT_BINS = 10
R2_WIDEN = 0.95
MAX_WIDENINGS = 2
SURVIVAL_TOP = 0.1
SURVIVAL_FLOOR = 1e-3
BOOTSTRAP_RESAMPLES = 200


def predict_tails(model: RateModel, kernel, C: float) -> TailPrediction:
    """alpha0 = mu0 + 1 - nu0, theta = gamma_inf + 1 - nu_inf, eta = C beta_inf / (theta tau_inf)."""
    if not 0 < C < 1:
        raise ValueError(f"C must lie in (0, 1), got {C}")
    tau, beta = model.tau_asym, model.beta_asym
    theta = beta.exp_inf + 1.0 - tau.exp_inf
    if theta <= 0:
        raise ModelValidationError(f"theta = {theta:.6g} <= 0: balance at ∞ fails")
    eta = C * beta.coef_inf / (theta * tau.coef_inf)

    bd = kernel.boundary_data
    alpha0 = reason = None
    valid = False
    if bd is None:
        reason = "kernel has no density"
    elif bd.q0 == 0:
        reason = "kernel density vanishes near 0"
    else:
        alpha0 = bd.mu0 + 1.0 - tau.exp_zero
        valid = bd.mu0 + 2.0 - tau.exp_zero > 0
        if not valid:
            reason = "mu0 + 2 - nu0 <= 0"
    return TailPrediction(
        alpha0_pred=alpha0, left_valid=valid, left_reason=reason, theta_pred=theta, eta_pred=eta, C=C
    )


def _sorted(dist: EmpiricalDistribution) -> Tuple[np.ndarray, np.ndarray]:
    order = np.argsort(dist.samples, kind="stable")
    return dist.samples[order], dist.weights[order]


def _weighted_quantile(x: np.ndarray, w: np.ndarray, q: float) -> float:
    cum = np.cumsum(w)
    return float(x[min(np.searchsorted(cum, q * cum[-1]), x.size - 1)])


def _log_density_fit(x: np.ndarray, w: np.ndarray, lo: float, hi: float):
    edges = np.logspace(math.log10(lo), math.log10(hi), LEFT_BINS + 1)
    mass, _ = np.histogram(x, bins=edges, weights=w)
    keep = mass > 0
    if np.count_nonzero(keep) < 3:
        raise TailWindowError(f"left window [{lo:.3g}, {hi:.3g}] has fewer than 3 occupied bins")
    centers = np.sqrt(edges[:-1] * edges[1:])
    density = mass / np.diff(edges)
    return stats.linregress(np.log(centers[keep]), np.log(density[keep]))


def fit_left_tail(dist: EmpiricalDistribution, min_count: Optional[int] = None) -> LeftTailFit:
    """Slope of log density against log x on the lowest decade holding enough samples.

    The decade needs max(200, N/100) samples and must end below the 10th
    percentile. A poor fit (R^2 < 0.95 with a slope significantly nonzero) is
    retried with the upper end raised by sqrt(10), at most twice and never past
    the median.

    Raises:
        TailWindowError: if no window qualifies.
    """
    x, w = _sorted(dist)
    n = x.size
    min_count = min_count or max(MIN_WINDOW, n // 100)
    p10 = _weighted_quantile(x, w, 0.1)
    if np.searchsorted(x, p10, side="right") < min_count:
        raise TailWindowError(f"fewer than {min_count} samples below the 10th percentile")
    counts = np.searchsorted(x, 10.0 * x, side="right") - np.arange(n)
    start = np.flatnonzero((counts >= min_count) & (10.0 * x <= p10))
    if start.size == 0:
        raise TailWindowError(f"no decade below the 10th percentile holds {min_count} samples")
    lo = float(x[start[0]])
    hi = 10.0 * lo
    median = _weighted_quantile(x, w, 0.5)
    for widenings in range(MAX_WIDENINGS + 1):
        fit = _log_density_fit(x, w, lo, hi)
        r2 = fit.rvalue**2
        significant = abs(fit.slope) > 3.0 * fit.stderr
        if r2 >= R2_WIDEN or not significant:
            in_window = int(np.searchsorted(x, hi, side="right") - np.searchsorted(x, lo, side="left"))
            return LeftTailFit(
                alpha0=float(fit.slope),
                stderr=float(fit.stderr),
                x_lo=lo,
                x_hi=hi,
                r_squared=float(r2),
                n_window=in_window,
                widenings=widenings,
            )
        if hi * math.sqrt(10.0) > median:
            break
        hi *= math.sqrt(10.0)
        logger.info(f"left-tail fit R^2={r2:.3f}; widening window to [{lo:.3g}, {hi:.3g}]")
    raise TailWindowError(f"left-tail fit stays poor (R^2 < {R2_WIDEN}) after widening")


def fit_right_tail(dist: EmpiricalDistribution) -> RightTailFit:
    """Two-stage fit of the survival S in the window S in [max(1e-3, 50/N), 0.1].

    theta from log(-log S) against log x, then eta from -log S against x^theta.
    alpha_inf comes from adding a log x column and is always low-confidence.

    Raises:
        TailWindowError: if the window holds fewer than 200 samples.
    """
    x, w = _sorted(dist)
    n = x.size
    # midpoint survival avoids S = 0 at the largest sample
    survival = 1.0 - np.cumsum(w) + 0.5 * w
    s_lo = max(SURVIVAL_FLOOR, 50.0 / n)
    window = (survival <= SURVIVAL_TOP) & (survival >= s_lo)
    count = int(np.count_nonzero(window))
    if count < MIN_WINDOW:
        raise TailWindowError(f"right-tail window holds {count} samples, need {MIN_WINDOW}")
    xs, s = x[window], survival[window]
    log_s = -np.log(s)

    stage1 = stats.linregress(np.log(xs), np.log(log_s))
    theta = float(stage1.slope)
    stage2 = stats.linregress(xs**theta, log_s)

    design = np.column_stack([xs**theta, np.log(xs), np.ones_like(xs)])
    coef, *_ = np.linalg.lstsq(design, log_s, rcond=None)
    alpha_inf = float(-coef[1] + theta - 1.0)

    return RightTailFit(
        theta=theta,
        theta_stderr=float(stage1.stderr),
        eta=float(stage2.slope),
        eta_stderr=float(stage2.stderr),
        alpha_inf=alpha_inf,
        alpha_inf_low_confidence=True,
        x_lo=float(xs[0]),
        x_hi=float(xs[-1]),
        r_squared_theta=float(stage1.rvalue**2),
        r_squared_eta=float(stage2.rvalue**2),
        n_window=count,
    )


def fit_tails(dist: EmpiricalDistribution, left: bool = True) -> TailFit:
    """Both fits; a failed window becomes a note instead of an error."""
    result = TailFit()
    for side, fitter, wanted in (("left", fit_left_tail, left), ("right", fit_right_tail, True)):
        if not wanted:
            continue
        try:
            setattr(result, side, fitter(dist))
        except TailWindowError as e:
            logger.warning(f"{side} tail: {e}")
            result.notes.append(f"{side} tail: {e}")
    return result


def compare_tails(
    prediction: TailPrediction,
    fit: TailFit,
    alpha_tol: float = 0.15,
    theta_tol: float = 0.2,
) -> List[TailComparisonRow]:
    """Predicted against fitted exponents.

    alpha0 is a lower bound, so a fit above it is flagged, not failed; eta is
    one-sided in the same way (a fit at least the prediction is ok).
    """
    rows: List[TailComparisonRow] = []
    left = fit.left
    if prediction.alpha0_pred is None or left is None or not prediction.left_valid:
        rows.append(
            TailComparisonRow(
                quantity="alpha0",
                predicted=prediction.alpha0_pred,
                fitted=left.alpha0 if left else None,
                stderr=left.stderr if left else None,
                status="n/a",
            )
        )
    else:
        gap = left.alpha0 - prediction.alpha0_pred
        status = "ok" if abs(gap) <= alpha_tol else ("flagged" if gap > 0 else "failed")
        rows.append(
            TailComparisonRow(
                quantity="alpha0",
                predicted=prediction.alpha0_pred,
                fitted=left.alpha0,
                stderr=left.stderr,
                status=status,
            )
        )
    right = fit.right
    if right is None:
        rows.append(TailComparisonRow(quantity="theta", predicted=prediction.theta_pred, status="n/a"))
        rows.append(TailComparisonRow(quantity="eta", predicted=prediction.eta_pred, status="n/a"))
        return rows
    rows.append(
        TailComparisonRow(
            quantity="theta",
            predicted=prediction.theta_pred,
            fitted=right.theta,
            stderr=right.theta_stderr,
            status="ok" if abs(right.theta - prediction.theta_pred) <= theta_tol else "failed",
        )
    )
    rows.append(
        TailComparisonRow(
            quantity="eta",
            predicted=prediction.eta_pred,
            fitted=right.eta,
            stderr=right.eta_stderr,
            status="ok" if right.eta >= prediction.eta_pred else "flagged",
        )
    )
    return rows


def default_test_functions(kernel, bump_center: float = 1.0, bump_width: float = 1.0) -> List[Observable]:
    battery: List[Observable] = [PowerObservable(1.0), PowerObservable(2.0), LogObservable()]
    if math.isfinite(kernel.moment(-0.5)):
        battery.append(PowerObservable(-0.5))
    battery.append(BumpObservable(bump_center, bump_width))
    return battery


def bootstrap_stderr(
    values: np.ndarray,
    weights: np.ndarray,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> float:
    """Std of weighted means over resamples; resample i uses the i-th child stream of seed."""
    n = values.size
    uniform = bool(np.all(weights == weights[0]))
    probabilities = weights / np.sum(weights)

    def one(seq) -> float:
        rng = np.random.default_rng(seq)
        if uniform:
            idx = rng.integers(0, n, size=n)
        else:
            idx = rng.choice(n, size=n, replace=True, p=probabilities)
        return float(np.mean(values[idx]))

    with ThreadPoolExecutor() as pool:
        means = list(pool.map(one, child_sequences(seed, resamples)))
    return float(np.std(means, ddof=1))


def stationarity_residual(
    model: RateModel,
    kernel,
    dist: EmpiricalDistribution,
    test_functions: Optional[Sequence[Observable]] = None,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> List[StationarityResidual]:
    """Average of Lf over the samples, which vanishes for the true stationary law."""
    battery = test_functions if test_functions is not None else default_test_functions(kernel)
    results: List[StationarityResidual] = []
    for f in battery:
        try:
            values = generator_values(model, kernel, f, dist.samples)
        except DivergentIntegralError as e:
            results.append(StationarityResidual(name=f.name, skipped=str(e)))
            continue
        if not np.all(np.isfinite(values)):
            results.append(StationarityResidual(name=f.name, skipped="Lf is not finite on the samples"))
            continue
        residual = float(np.sum(dist.weights * values) / np.sum(dist.weights))
        stderr = bootstrap_stderr(values, dist.weights, resamples, seed)
        results.append(StationarityResidual(name=f.name, residual=residual, stderr=stderr))
    return results


def empirical_moment(dist: EmpiricalDistribution, g: Callable) -> float:
    """Weighted sample average of g (exactly 1 for g = 1)."""
    return float(np.sum(dist.weights * g(dist.samples)) / np.sum(dist.weights))


def running_moment(dist: EmpiricalDistribution, g: Callable, checkpoints: int = 10) -> List[Tuple[int, float]]:
    """Running average of g at geometrically spaced sample counts, in sample order."""
    values = dist.weights * g(dist.samples)
    cum_v = np.cumsum(values)
    cum_w = np.cumsum(dist.weights)
    n = dist.count
    counts = np.unique(np.geomspace(min(100, n), n, checkpoints).astype(int))
    return [(int(k), float(cum_v[k - 1] / cum_w[k - 1])) for k in counts]


def is_stable(running: Sequence[Tuple[int, float]], rtol: float = 0.1) -> bool:
    """True when the second half of the running estimate stays within rtol of its final value."""
    final = running[-1][1]
    tail = [value for _, value in running[len(running) // 2 :]]
    return bool(np.all(np.abs(np.asarray(tail) - final) <= rtol * abs(final)))
