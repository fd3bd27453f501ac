"""validate: assumption checks and the recurrence classification."""

import logging

from commands.base import BaseCommand, RunContext, prepare_model
from models import CommandResult, RunConfig


logger = logging.getLogger("validate_command")


class ValidateCommand(BaseCommand):
    """Exit 0 iff the model is Harris recurrent; otherwise 2, naming the failing condition."""

    name = "validate"

    def run(self, config: RunConfig, context: RunContext) -> CommandResult:
        prepared = prepare_model(config)
        c = prepared.classification
        report = {
            "classification": c,
            "kernel_mass": prepared.kernel_mass,
            "moments": {
                "a": prepared.moments.a,
                "b": prepared.moments.b,
                "m_a": prepared.moments.m_a,
                "m_minus_b": prepared.moments.m_minus_b,
                "passed": prepared.moments.passed,
            },
            "phantom_mass_stripped": prepared.p_one,
            "notes": prepared.notes,
        }
        path = context.reporter.write_json("validate.json", self.name, report)

        tiers = f"harris={c.harris_recurrent}, positive={c.positive_recurrent}, exp_ergodic={c.exp_ergodic}"
        if c.harris_recurrent:
            summary = f"{tiers} (a={c.a:g}, b={c.b:g})"
            exit_code = 0
        else:
            summary = f"{tiers}; failing: {', '.join(c.failing)}"
            exit_code = 2
        logger.info(summary)
        return CommandResult(
            command=self.name,
            exit_code=exit_code,
            summary=summary,
            artifacts=[str(path)],
            report=report,
            notes=list(prepared.notes) + [f"failing condition: {name}" for name in c.failing],
        )
