# region -----External Imports-----
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, field_validator, model_validator
# endregion

# region -----Internal Imports-----
from config import BASE_SEED, DIVERGENCE_THRESHOLD
from ..models import ALGORITHMS
# endregion

# region -----Supporting Variables-----
Metric = Literal["value-l2", "value-rms", "param-l2"]
Reference = Literal["v-pi", "theta-star", "theta-lambda", "finite-b"]
# endregion


def _check_algorithm(name: str) -> str:
    if name not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {name!r}; expected one of {list(ALGORITHMS)}")
    return name


# region -----Experiment Config Schemas-----
class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # region -----MDP-----
    mdp: str = "baird"
    mdp_file: Optional[Path] = None
    p_solid_target: float = 0.9
    p_solid_behavior: float = 1.0 / 7.0
    target_probs: Optional[List[float]] = None
    behavior_probs: Optional[List[float]] = None
    start_state: Optional[int] = None
    # endregion

    # region -----Features-----
    features: str = "phi1"
    features_file: Optional[Path] = None
    # endregion

    # region -----Algorithm-----
    algo: str = "per-etd0"
    algos: List[str] = []
    b: int = 4
    lam: float = 0.0
    stepsize: Literal["constant", "diminishing", "theory"] = "constant"
    eta: float = 2.0 ** -9
    step_mu: Optional[float] = None
    step_t0: Optional[float] = None
    projection: Literal["off", "theory", "radius"] = "off"
    radius: Optional[float] = None
    # endregion

    # region -----Experiment-----
    T: int = 1000
    budget: Optional[int] = None
    n_seeds: int = 20
    base_seed: int = BASE_SEED
    stride: int = 1
    points: Optional[int] = None
    metric: Metric = "value-l2"
    reference: Reference = "v-pi"
    projection_weights: Literal["d-mu", "uniform"] = "d-mu"
    threshold: float = DIVERGENCE_THRESHOLD
    b_values: List[int] = []
    lambda_values: List[float] = []
    rho_values: List[float] = []
    vary: Literal["target", "behavior"] = "target"
    n_samples: int = 10000
    probe_theta: Optional[List[float]] = None
    loci_only: bool = False
    # endregion

    @field_validator("algo")
    @classmethod
    def validate_algo(cls, algo):
        return _check_algorithm(algo)

    @field_validator("algos")
    @classmethod
    def validate_algos(cls, algos):
        return [_check_algorithm(name) for name in algos]

    @field_validator("p_solid_target", "p_solid_behavior")
    @classmethod
    def validate_solid_probability(cls, p):
        if not 0.0 < p < 1.0:
            raise ValueError("solid-action probability must lie in (0, 1)")
        return p

    @field_validator("lam")
    @classmethod
    def validate_lambda(cls, lam):
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        return lam

    @field_validator("lambda_values")
    @classmethod
    def validate_lambda_values(cls, values):
        for lam in values:
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"lambda value {lam} outside [0, 1]")
        return values

    @field_validator("rho_values")
    @classmethod
    def validate_rho_values(cls, values):
        for p in values:
            if not 0.0 < p < 1.0:
                raise ValueError(f"policy parameter {p} outside (0, 1)")
        return values

    @field_validator("b_values")
    @classmethod
    def validate_b_values(cls, values):
        for b in values:
            if b < 1:
                raise ValueError(f"period length {b} must be >= 1")
        return values

    @field_validator("b", "n_seeds", "stride", "n_samples")
    @classmethod
    def validate_positive(cls, value):
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @field_validator("T")
    @classmethod
    def validate_iterations(cls, T):
        if T < 0:
            raise ValueError("T must be nonnegative")
        return T

    @field_validator("eta", "threshold")
    @classmethod
    def validate_strictly_positive(cls, value):
        if not value > 0:
            raise ValueError("must be positive")
        return value

    @model_validator(mode="after")
    def validate_combinations(self):
        if self.projection == "radius" and self.radius is None:
            raise ValueError("projection = radius needs a radius")
        if self.stepsize == "diminishing" and (self.step_mu is None or self.step_t0 is None):
            raise ValueError("stepsize = diminishing needs step_mu and step_t0")
        if self.mdp == "file" and self.mdp_file is None:
            raise ValueError("mdp = file needs mdp_file")
        if self.features == "file" and self.features_file is None:
            raise ValueError("features = file needs features_file")
        return self


class CliConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    subcommand: str
    config_path: Optional[Path] = None
    figure: Optional[str] = None
    overrides: dict = {}
    out: Optional[str] = None
    base_seed: Optional[int] = None
    jobs: int = 1

    @field_validator("jobs")
    @classmethod
    def validate_jobs(cls, jobs):
        if jobs < 1:
            raise ValueError("jobs must be >= 1")
        return jobs
# endregion


# region -----Result Schemas-----
class RecordPoint(BaseModel):
    iteration: int
    transitions: int
    error: float


class RunRecord(BaseModel):
    seed: int
    algo: str
    b: int
    lam: float
    points: List[RecordPoint]
    diverged: bool = False
    final_theta: List[float] = []

    @model_validator(mode="after")
    def validate_iterations(self):
        iterations = [point.iteration for point in self.points]
        if any(later <= earlier for earlier, later in zip(iterations, iterations[1:])):
            raise ValueError("snapshot iterations must be strictly increasing")
        return self


class CurvePoint(BaseModel):
    iteration: int
    transitions: int
    mean: Optional[float] = None
    std: Optional[float] = None
    n: int
    n_diverged: int


class BiasVarianceSummary(BaseModel):
    b: int
    bias: Optional[float] = None
    variance: Optional[float] = None
    mse: Optional[float] = None
    n_seeds: int
    n_diverged: int
    flagged: bool = False

    @field_validator("variance")
    @classmethod
    def validate_variance(cls, variance):
        if variance is not None and variance < 0:
            raise ValueError("variance must be nonnegative")
        return variance


class LambdaSweepRow(BaseModel):
    lam: float
    final_error_mean: Optional[float] = None
    final_error_std: Optional[float] = None
    fixedpoint_dist_to_projection: float


class LociRow(BaseModel):
    lam: float
    b: int
    dim: int
    theta_fixed: float
    theta_projection: float


class RhoSweepRow(BaseModel):
    rho_max: float
    iteration: int
    error_mean: Optional[float] = None
    error_std: Optional[float] = None


class ProbeResult(BaseModel):
    b: int
    lam: Optional[float] = None
    n_samples: int
    mean: List[float]
    mean_se: List[float]
    covariance_trace: float
    second_moment: float
    second_moment_se: float


class FixedPointReport(BaseModel):
    lam: float
    theta: List[float]
    mu: float
    lipschitz: float
    t0: float
    eps_approx: float
    condition: float
    rho_max: float
    variance_regime: str
    rate_exponent: float
    emphatic_mass: float
    b: Optional[int] = None
    theta_b: Optional[List[float]] = None
    selected_b: Optional[int] = None
# endregion
