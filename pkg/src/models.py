"""Data models for the cell-process toolkit: run configuration and reports."""

from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from rates import AsymptoticData, Kernel, RateFunction, RateModel


Auto = Literal["auto"]


class ReportModel(BaseModel):
    """Base for serialized reports; infinities are written as strings."""

    model_config = ConfigDict(ser_json_inf_nan="strings")


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


class ModelSection(BaseModel):
    """Rates, kernel and optional declared asymptotics."""

    model_config = ConfigDict(extra="forbid")

    tau: RateFunction
    beta: RateFunction
    kernel: Kernel
    tau_asym: Optional[AsymptoticData] = None
    beta_asym: Optional[AsymptoticData] = None
    asymptotic_tolerance: float = Field(default=0.05, gt=0)

    def rate_model(self) -> RateModel:
        return RateModel(
            tau=self.tau,
            beta=self.beta,
            tau_declared=self.tau_asym,
            beta_declared=self.beta_asym,
            asymptotic_tolerance=self.asymptotic_tolerance,
        )


class SimulationSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    horizon: float = Field(default=2000.0, gt=0)
    burn_in: Optional[float] = Field(default=None, ge=0)
    stride: Optional[float] = Field(default=None, gt=0)
    n_chains: Optional[int] = Field(default=None, ge=1)
    x0: float = Field(default=1.0, gt=0)
    jump_sampler: Literal["inversion", "thinning"] = "inversion"
    histogram_bins: int = Field(default=200, ge=2)
    trajectory_span: float = Field(default=50.0, ge=0)


class LyapunovSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: Union[float, Auto] = "auto"
    b: Union[float, Auto] = "auto"
    eps: float = Field(default=0.1, ge=0)
    eta: Union[float, Auto] = "auto"
    theta: Union[float, Auto] = "auto"
    C: float = Field(default=0.5, gt=0, lt=1)
    x0_bound: float = Field(default=10.0, gt=0)
    grid_min: float = Field(default=1e-4, gt=0)
    grid_max: float = Field(default=1e4, gt=0)
    grid_points: int = Field(default=81, ge=5)


class PdeSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x_min: float = Field(default=1e-3, gt=0)
    x_max: float = Field(default=30.0, gt=0)
    cells: int = Field(default=2000, ge=4)
    per_octave: Optional[int] = Field(default=None, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    cfl: float = Field(default=0.9, gt=0, le=0.9)
    max_steps: int = Field(default=200_000, ge=1)
    check_every: int = Field(default=100, ge=1)
    marching: Literal["local", "global"] = "local"


class TailsSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bootstrap: int = Field(default=200, ge=2)
    bump_center: float = Field(default=1.0, gt=0)
    bump_width: float = Field(default=1.0, gt=0)


class CompareSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bound: float = Field(default=0.05, gt=0)
    x_lo: float = Field(default=1e-2, gt=0)
    x_hi: float = Field(default=10.0, gt=0)
    bins: int = Field(default=100, ge=2)


class RunConfig(BaseModel):
    """Complete description of one run; embedded verbatim in every artifact."""

    model_config = ConfigDict(extra="forbid")

    name: str = "run"
    seed: int = Field(default=0, ge=0, lt=2**64)
    output_dir: str = "results"
    model: ModelSection
    simulation: SimulationSection = Field(default_factory=SimulationSection)
    lyapunov: LyapunovSection = Field(default_factory=LyapunovSection)
    pde: PdeSection = Field(default_factory=PdeSection)
    tails: TailsSection = Field(default_factory=TailsSection)
    compare: CompareSection = Field(default_factory=CompareSection)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


class Provenance(ReportModel):
    """How an empirical distribution was produced."""

    seed: Optional[int] = None
    horizon: float
    burn_in: float
    stride: float
    n_chains: int
    x0: float = 1.0


class InequalityCheck(ReportModel):
    """One inequality lhs <relation> rhs with its signed margin (positive when it holds)."""

    name: str
    lhs: float
    relation: str
    rhs: float
    margin: float
    holds: bool


class BalanceClassification(ReportModel):
    harris_recurrent: bool
    positive_recurrent: bool
    exp_ergodic: bool
    critical_at_0: bool
    critical_at_inf: bool
    a: float
    b: float
    checks: List[InequalityCheck]
    failing: List[str] = Field(default_factory=list)


class DriftPoint(ReportModel):
    x: float
    exact: float
    closed_form: Optional[float] = None
    bound: Optional[float] = None


class DriftReport(ReportModel):
    """LV on a log grid with the Foster-Lyapunov constants it implies."""

    a: float
    b: float
    points: List[DriftPoint]
    slope_zero: Optional[float] = None
    slope_inf: Optional[float] = None
    compact: Optional[Tuple[float, float]] = None
    alpha: Optional[float] = None
    alpha_prime: Optional[float] = None
    f_exponent_zero: float
    f_exponent_inf: float
    f_constant_at_inf: bool = False
    splice_convex: bool
    notes: List[str] = Field(default_factory=list)


class BoundVCheck(ReportModel):
    theta: float
    eta: float
    eps: float
    x0: float
    C: float
    grid_sup: float
    limit: float
    sup: float
    passed: bool


class VtildeDrift(ReportModel):
    x: float
    exact: float
    envelope: float
    holds: bool


class VtildeProfile(ReportModel):
    points: List[VtildeDrift]
    threshold: Optional[float] = None


class TailPrediction(ReportModel):
    alpha0_pred: Optional[float] = None
    left_valid: bool
    left_reason: Optional[str] = None
    theta_pred: float
    eta_pred: float
    C: float


class LeftTailFit(ReportModel):
    alpha0: float
    stderr: float
    x_lo: float
    x_hi: float
    r_squared: float
    n_window: int
    widenings: int = 0


class RightTailFit(ReportModel):
    theta: float
    theta_stderr: float
    eta: float
    eta_stderr: float
    alpha_inf: Optional[float] = None
    alpha_inf_low_confidence: bool = True
    x_lo: float
    x_hi: float
    r_squared_theta: float
    r_squared_eta: float
    n_window: int


class TailFit(ReportModel):
    left: Optional[LeftTailFit] = None
    right: Optional[RightTailFit] = None
    notes: List[str] = Field(default_factory=list)


class TailComparisonRow(ReportModel):
    quantity: str
    predicted: Optional[float] = None
    fitted: Optional[float] = None
    stderr: Optional[float] = None
    status: Literal["ok", "flagged", "failed", "n/a"]


class StationarityResidual(ReportModel):
    name: str
    residual: Optional[float] = None
    stderr: Optional[float] = None
    skipped: Optional[str] = None


class CommandResult(ReportModel):
    """Outcome of one subcommand."""

    command: str
    exit_code: int = 0
    summary: str = ""
    artifacts: List[str] = Field(default_factory=list)
    report: Dict[str, Any] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)
