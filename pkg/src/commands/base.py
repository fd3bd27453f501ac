"""Base command class and the model preparation every subcommand shares."""

import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from lyapunov import LyapunovSpec, build_spec, classify_balance
from models import BalanceClassification, CommandResult, RunConfig
from rates import MomentCheck, RateModel, check_kernel_mass, check_moment_assumptions, strip_model


logger = logging.getLogger("commands")


class RunContext(BaseModel):
    """Where a command writes and how it may bend the rules."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    output_dir: Path
    reporter: Any
    force: bool = False


class PreparedModel(BaseModel):
    """A config's model after phantom stripping, checks and classification."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    model: RateModel
    kernel: Any
    spec: LyapunovSpec
    classification: BalanceClassification
    moments: MomentCheck
    kernel_mass: float
    p_one: float = 0.0
    notes: List[str] = Field(default_factory=list)


def prepare_model(config: RunConfig) -> PreparedModel:
    """Strip phantom jumps, validate the rates and the kernel, resolve the Lyapunov exponents and classify."""
    raw_model = config.model.rate_model()
    raw_kernel = config.model.kernel
    p_one = raw_kernel.atom_at_one
    model, kernel = strip_model(raw_model, raw_kernel)
    notes: List[str] = []
    if p_one > 0:
        notes.append(f"stripped phantom jumps: beta scaled by {1.0 - p_one:.6g}")
    notes.extend(model.validate_assumptions())
    mass = check_kernel_mass(kernel)
    lyap = config.lyapunov
    spec = build_spec(model, kernel, lyap.a, lyap.b, lyap.eps, lyap.eta, lyap.theta, lyap.C)
    moments = check_moment_assumptions(kernel, spec.a, spec.b)
    if not moments.passed:
        notes.append(f"moment assumptions fail for a={spec.a:g}, b={spec.b:g}: M(a)={moments.m_a:.6g}, M(-b)={moments.m_minus_b:.6g}")
    classification = classify_balance(model, kernel, spec)
    for note in notes:
        logger.info(note)
    return PreparedModel(
        model=model,
        kernel=kernel,
        spec=spec,
        classification=classification,
        moments=moments,
        kernel_mass=mass,
        p_one=p_one,
        notes=notes,
    )


def log_grid(lo: float, hi: float, points: int) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), points)


class BaseCommand(ABC):
    """Base class for subcommands."""

    name: str = ""

    @abstractmethod
    def run(self, config: RunConfig, context: RunContext) -> CommandResult:
        """
        Run the subcommand on a validated configuration.

        Args:
            config: Complete run configuration
            context: Output directory, reporter and the force flag

        Returns:
            CommandResult with:
            - exit_code: 0 success, 2 assumption failure, 3 numerical, 4 acceptance
            - summary: one-line outcome
            - artifacts: paths of the files written
            - report: the serialized report
        """
        pass
