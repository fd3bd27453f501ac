"""drift and tails: Lyapunov drift checks and tail-exponent fits."""

import logging
from typing import List

from commands.base import BaseCommand, RunContext, log_grid, prepare_model
from commands.simulate import load_or_simulate
from errors import AcceptanceError, DivergentIntegralError
from lyapunov import check_bound_v, drift_report, vtilde_profile
from models import CommandResult, RunConfig
from tails import compare_tails, default_test_functions, fit_tails, predict_tails, stationarity_residual


logger = logging.getLogger("analysis_command")


class DriftCommand(BaseCommand):
    """LV on a log grid, the BoundV check and the Vtilde envelope scan."""

    name = "drift"

    def run(self, config: RunConfig, context: RunContext) -> CommandResult:
        prepared = prepare_model(config)
        lyap = config.lyapunov
        spec = prepared.spec
        grid = log_grid(lyap.grid_min, lyap.grid_max, lyap.grid_points)
        report = drift_report(prepared.model, prepared.kernel, spec, grid)
        notes: List[str] = list(prepared.notes) + list(report.notes)

        bound_v = profile = None
        if spec.theta is not None and spec.eta is not None:
            try:
                bound_v = check_bound_v(prepared.kernel, spec.theta, spec.eta, spec.eps, lyap.x0_bound, spec.C)
                if bound_v.passed:
                    vtilde_grid = log_grid(1.0, 100.0 * lyap.x0_bound, lyap.grid_points // 2)
                    profile = vtilde_profile(prepared.model, prepared.kernel, spec, vtilde_grid, bound_v)
                else:
                    notes.append("BoundV fails: Vtilde envelope scan skipped")
            except DivergentIntegralError as e:
                notes.append(f"exponential Lyapunov function skipped: {e}")
        else:
            notes.append("theta <= 0: no exponential Lyapunov function")

        reporter = context.reporter
        payload = {"drift": report, "bound_v": bound_v, "vtilde": profile, "spec": spec}
        artifacts = [
            str(reporter.write_json("drift.json", self.name, payload)),
            str(
                reporter.write_csv(
                    "drift.csv",
                    self.name,
                    ("x", "exact", "closed_form", "bound"),
                    [(p.x, p.exact, p.closed_form, p.bound) for p in report.points],
                )
            ),
        ]

        if report.compact is None:
            summary = "LV is not negative outside a compact set on this grid"
            exit_code = 2
        else:
            lo, hi = report.compact
            summary = f"LV < 0 outside [{lo:.4g}, {hi:.4g}], alpha={report.alpha}, alpha'={report.alpha_prime}"
            exit_code = 0
        if bound_v is not None:
            summary += f"; BoundV sup {bound_v.sup:.4g} ({'<' if bound_v.passed else '>='} 1 - C)"
        return CommandResult(
            command=self.name, exit_code=exit_code, summary=summary, artifacts=artifacts, report=payload, notes=notes
        )


class TailsCommand(BaseCommand):
    """Predicted against fitted tails of the sampled stationary law, plus stationarity residuals."""

    name = "tails"

    def run(self, config: RunConfig, context: RunContext) -> CommandResult:
        prepared = prepare_model(config)
        dist = load_or_simulate(config, context, prepared)
        prediction = predict_tails(prepared.model, prepared.kernel, prepared.spec.C)
        fit = fit_tails(dist, left=prediction.left_valid)
        rows = compare_tails(prediction, fit)
        battery = default_test_functions(prepared.kernel, config.tails.bump_center, config.tails.bump_width)
        residuals = stationarity_residual(
            prepared.model, prepared.kernel, dist, battery, config.tails.bootstrap, config.seed
        )

        reporter = context.reporter
        payload = {"prediction": prediction, "fit": fit, "comparison": rows, "stationarity": residuals}
        artifacts = [
            str(reporter.write_json("tails.json", self.name, payload)),
            str(
                reporter.write_csv(
                    "tails.csv",
                    self.name,
                    ("quantity", "predicted", "fitted", "stderr", "status"),
                    [(r.quantity, r.predicted, r.fitted, r.stderr, r.status) for r in rows],
                )
            ),
            str(
                reporter.write_csv(
                    "stationarity.csv",
                    self.name,
                    ("name", "residual", "stderr", "skipped"),
                    [(r.name, r.residual, r.stderr, r.skipped) for r in residuals],
                )
            ),
        ]
        notes = list(prepared.notes) + list(fit.notes)
        notes += [f"{r.quantity} flagged: fit {r.fitted:.4g} against {r.predicted:.4g}" for r in rows if r.status == "flagged"]
        failed = [r.quantity for r in rows if r.status == "failed"]
        statuses = ", ".join(f"{r.quantity}={r.status}" for r in rows)
        if failed:
            raise AcceptanceError(f"{statuses}; failed: {', '.join(failed)}")
        return CommandResult(
            command=self.name,
            summary=statuses,
            artifacts=artifacts,
            report=payload,
            notes=notes,
        )
