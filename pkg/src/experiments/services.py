# region -----External Imports-----
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
# endregion

# region -----Internal Imports-----
from ..algorithms import empirical_operator0, empirical_operator_lambda, run_training, theory_schedule
from ..exceptions import InvalidArgumentError
from ..features import default_radius, weighted_projection
from ..fixed_points import (
    emphatic_f,
    etd0_fixed_point,
    etd_lambda_fixed_point,
    finite_b_fixed_point,
    monotonicity_constant,
    rate_exponent,
    select_b,
    theory_constants,
    variance_regime,
)
from ..mdp import induced_chain, rho_max, stationary_distribution, value_function
from ..models import (
    AlgoConfig,
    BSelectorParams,
    FeatureMap,
    FiniteMdp,
    OperatorModel,
    PERIODIC_ALGORITHMS,
    Policy,
    ProjectionBall,
    StepsizeSchedule,
)
from ..numerics import condition_number
from ..sampler import TrajectorySampler, sample_window
from . import presets
from .schemas import (
    BiasVarianceSummary,
    CurvePoint,
    ExperimentConfig,
    FixedPointReport,
    LambdaSweepRow,
    LociRow,
    ProbeResult,
    RecordPoint,
    RhoSweepRow,
    RunRecord,
)
# endregion

# region -----Supporting Variables-----
logger = logging.getLogger(__name__)

LAMBDA_ALGORITHMS = ("etd-lambda", "per-etd-lambda")
EMPHATIC_ALGORITHMS = ("etd0", "per-etd0") + LAMBDA_ALGORITHMS
IDENTITY_TOL = 1e-9
# endregion


# region -----Setting-----
@dataclass(frozen=True)
class Setting:
    mdp: FiniteMdp
    target: Policy
    behavior: Policy
    features: FeatureMap
    p_pi: np.ndarray
    r_pi: np.ndarray
    d_mu: np.ndarray
    v_pi: np.ndarray

    @property
    def gamma(self) -> float:
        return self.mdp.gamma


def build_setting(cfg: ExperimentConfig) -> Setting:
    mdp, target, behavior = presets.resolve_mdp(cfg)
    features = presets.resolve_features(cfg, mdp.n_states)
    chain = induced_chain(mdp, target)
    d_mu = stationary_distribution(induced_chain(mdp, behavior).p_pi)
    return Setting(
        mdp=mdp,
        target=target,
        behavior=behavior,
        features=features,
        p_pi=chain.p_pi,
        r_pi=chain.r_pi,
        d_mu=d_mu,
        v_pi=value_function(chain, mdp.gamma),
    )


def projection_weights(cfg: ExperimentConfig, setting: Setting) -> np.ndarray:
    if cfg.projection_weights == "uniform":
        return np.full(setting.mdp.n_states, 1.0 / setting.mdp.n_states)
    return setting.d_mu


def v_pi_projection(cfg: ExperimentConfig, setting: Setting) -> np.ndarray:
    return weighted_projection(setting.v_pi, setting.features, projection_weights(cfg, setting))


def key_model(setting: Setting, algo: AlgoConfig) -> Tuple[OperatorModel, np.ndarray]:
    """Key matrix of the emphatic recursion behind algo, with its root.

    The periodic variants share the key matrix of the unrestarted recursion.
    """
    if algo.algo not in EMPHATIC_ALGORITHMS:
        raise InvalidArgumentError(f"theory constants need an emphatic algorithm, got {algo.algo}")
    f = emphatic_f(setting.d_mu, setting.p_pi, setting.gamma)
    if algo.algo in LAMBDA_ALGORITHMS:
        return etd_lambda_fixed_point(setting.features, f, setting.d_mu, setting.p_pi, setting.r_pi, setting.gamma, algo.lam)
    return etd0_fixed_point(setting.features, f, setting.p_pi, setting.r_pi, setting.gamma)
# endregion


# region -----Error Metrics-----
@dataclass(frozen=True)
class ErrorMetric:
    kind: str
    phi: np.ndarray
    v_ref: np.ndarray
    theta_ref: np.ndarray

    def __call__(self, theta: np.ndarray) -> float:
        if self.kind == "param-l2":
            return float(np.linalg.norm(theta - self.theta_ref))
        error = float(np.linalg.norm(self.phi @ theta - self.v_ref))
        if self.kind == "value-rms":
            return error / math.sqrt(self.v_ref.shape[0])
        return error


def reference_theta(cfg: ExperimentConfig, setting: Setting, algo: AlgoConfig) -> Optional[np.ndarray]:
    args = (setting.features, setting.d_mu, setting.p_pi, setting.r_pi, setting.gamma)
    if cfg.reference == "v-pi":
        return None
    if cfg.reference == "theta-star":
        return key_model(setting, AlgoConfig("etd0"))[1]
    if cfg.reference == "theta-lambda":
        return key_model(setting, AlgoConfig("etd-lambda", lam=algo.lam))[1]
    if not algo.periodic:
        raise InvalidArgumentError(f"reference finite-b needs a periodic algorithm, got {algo.algo}")
    return finite_b_fixed_point(*args, algo.lam, algo.b)


def error_metric(cfg: ExperimentConfig, setting: Setting, algo: AlgoConfig) -> ErrorMetric:
    phi = setting.features.phi
    theta_ref = reference_theta(cfg, setting, algo)
    if theta_ref is None:
        v_ref = setting.v_pi
        theta_ref = v_pi_projection(cfg, setting) if cfg.metric == "param-l2" else np.zeros(setting.features.d)
    else:
        v_ref = phi @ theta_ref
    return ErrorMetric(kind=cfg.metric, phi=phi, v_ref=v_ref, theta_ref=theta_ref)
# endregion


# region -----Trial Planning-----
def budget_iterations(algo: str, b: int, transitions: int) -> int:
    if transitions < 0:
        raise InvalidArgumentError(f"transition budget must be nonnegative, got {transitions}")
    if algo in PERIODIC_ALGORITHMS:
        return transitions // (b + 1)
    return transitions


def algo_configs(cfg: ExperimentConfig) -> List[AlgoConfig]:
    configs = []
    for name in cfg.algos or [cfg.algo]:
        lam = cfg.lam if name in LAMBDA_ALGORITHMS else 0.0
        if name in PERIODIC_ALGORITHMS:
            configs.extend(AlgoConfig(name, b=b, lam=lam) for b in (cfg.b_values or [cfg.b]))
        else:
            configs.append(AlgoConfig(name, b=0, lam=lam))
    return configs


def schedule_for(cfg: ExperimentConfig, setting: Setting, algo: AlgoConfig) -> StepsizeSchedule:
    if cfg.stepsize == "constant":
        return StepsizeSchedule.constant(cfg.eta)
    if cfg.stepsize == "diminishing":
        return StepsizeSchedule.diminishing(mu=cfg.step_mu, t0=cfg.step_t0)
    model, theta = key_model(setting, algo)
    constants = theory_constants(model, setting.features, theta, setting.v_pi)
    logger.info("theory stepsize for %s: mu=%.4g, t0=%.4g", algo.algo, constants.mu, constants.t0)
    return theory_schedule(constants)


def ball_for(cfg: ExperimentConfig, setting: Setting, algo: AlgoConfig) -> ProjectionBall:
    if cfg.projection == "off":
        return ProjectionBall.disabled()
    if cfg.projection == "radius":
        return ProjectionBall(cfg.radius)
    mu = monotonicity_constant(key_model(setting, algo)[0].a_matrix)
    return ProjectionBall(default_radius(setting.features, setting.mdp.r_max, setting.gamma, mu))


def iterations_for(cfg: ExperimentConfig, algo: AlgoConfig) -> int:
    if cfg.budget is not None:
        return budget_iterations(algo.algo, algo.b, cfg.budget)
    return cfg.T


def stride_for(cfg: ExperimentConfig, T: int) -> int:
    if cfg.points is not None:
        return max(1, T // cfg.points)
    return cfg.stride


@dataclass(frozen=True)
class TrialSpec:
    algo: AlgoConfig
    mdp: FiniteMdp
    target: Policy
    behavior: Policy
    features: FeatureMap
    schedule: StepsizeSchedule
    ball: ProjectionBall
    metric: ErrorMetric
    T: int
    seed: int
    stride: int
    start_state: Optional[int]
    threshold: float


def plan_trials(cfg: ExperimentConfig, setting: Setting, algo: AlgoConfig) -> List[TrialSpec]:
    T = iterations_for(cfg, algo)
    schedule = schedule_for(cfg, setting, algo)
    ball = ball_for(cfg, setting, algo)
    metric = error_metric(cfg, setting, algo)
    return [
        TrialSpec(
            algo=algo,
            mdp=setting.mdp,
            target=setting.target,
            behavior=setting.behavior,
            features=setting.features,
            schedule=schedule,
            ball=ball,
            metric=metric,
            T=T,
            seed=cfg.base_seed + k,
            stride=stride_for(cfg, T),
            start_state=cfg.start_state,
            threshold=cfg.threshold,
        )
        for k in range(cfg.n_seeds)
    ]
# endregion


# region -----Trial Execution-----
def execute_trial(spec: TrialSpec) -> RunRecord:
    trace = run_training(
        spec.algo, spec.mdp, spec.target, spec.behavior, spec.features, spec.schedule, spec.ball,
        spec.T, spec.seed, stride=spec.stride, start_state=spec.start_state, threshold=spec.threshold,
    )
    with np.errstate(over="ignore", invalid="ignore"):
        points = [
            RecordPoint(iteration=iteration, transitions=transitions, error=spec.metric(theta))
            for iteration, transitions, theta in zip(trace.iterations, trace.transitions, trace.thetas)
        ]
    return RunRecord(
        seed=spec.seed,
        algo=spec.algo.algo,
        b=spec.algo.b,
        lam=spec.algo.lam,
        points=points,
        diverged=trace.diverged,
        final_theta=trace.thetas[-1].tolist(),
    )


def execute_trials(specs: Sequence[TrialSpec], jobs: int = 1) -> List[RunRecord]:
    """Results come back in spec order whatever the worker interleaving."""
    if jobs < 1:
        raise InvalidArgumentError(f"jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(specs) < 2:
        return [execute_trial(spec) for spec in specs]
    with ProcessPoolExecutor(max_workers=min(jobs, len(specs))) as executor:
        return list(executor.map(execute_trial, specs))


def run_trial(cfg: ExperimentConfig, seed: int, algo: Optional[AlgoConfig] = None) -> RunRecord:
    setting = build_setting(cfg)
    algo = algo or algo_configs(cfg)[0]
    spec = plan_trials(cfg.model_copy(update={"base_seed": seed, "n_seeds": 1}), setting, algo)[0]
    return execute_trial(spec)


def run_trials(
        cfg: ExperimentConfig,
        jobs: int = 1,
        algo: Optional[AlgoConfig] = None,
        setting: Optional[Setting] = None
) -> List[RunRecord]:
    setting = setting or build_setting(cfg)
    algo = algo or algo_configs(cfg)[0]
    return execute_trials(plan_trials(cfg, setting, algo), jobs)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> List[RunRecord]:
    """Every algorithm variant of cfg, n_seeds trials each, in one pool."""
    setting = build_setting(cfg)
    specs = [spec for algo in algo_configs(cfg) for spec in plan_trials(cfg, setting, algo)]
    logger.info("running %d trials with %d jobs", len(specs), jobs)
    return execute_trials(specs, jobs)
# endregion


# region -----Aggregation-----
def _settled_points(record: RunRecord) -> List[RecordPoint]:
    """Snapshots before a diverged record's truncation point, which may fall off the stride grid."""
    return record.points[:-1] if record.diverged else record.points


def aggregate_trials(records: Sequence[RunRecord]) -> List[CurvePoint]:
    """Pointwise mean and n-1 standard deviation over trials still alive at each snapshot."""
    if not records:
        raise InvalidArgumentError("no records to aggregate")
    alive = [record for record in records if not record.diverged]
    grid = max(alive or records, key=lambda record: len(record.points)).points
    grid_iterations = [p.iteration for p in grid]
    for record in records:
        settled = [p.iteration for p in _settled_points(record)]
        if settled != grid_iterations[:len(settled)]:
            raise InvalidArgumentError(f"record for seed {record.seed} does not share the snapshot grid")
        if len(settled) < len(grid) and not record.diverged:
            raise InvalidArgumentError(f"record for seed {record.seed} is truncated without diverging")

    curve = []
    for index, point in enumerate(grid):
        errors = [record.points[index].error for record in records if index < len(_settled_points(record))]
        n_diverged = len(records) - len(errors)
        mean = std = None
        if errors:
            mean = float(np.mean(errors))
            std = float(np.std(errors, ddof=1)) if len(errors) > 1 else 0.0
        curve.append(CurvePoint(
            iteration=point.iteration,
            transitions=point.transitions,
            mean=mean,
            std=std,
            n=len(errors),
            n_diverged=n_diverged,
        ))
    return curve


def final_errors(records: Sequence[RunRecord]) -> List[float]:
    return [record.points[-1].error for record in records if not record.diverged]


def _mean_std(values: Sequence[float]) -> Tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    return float(np.mean(values)), float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
# endregion


# region -----Bias and Variance-----
def summarize_bias_variance(b: int, values: np.ndarray, v_ref: np.ndarray, n_diverged: int = 0) -> BiasVarianceSummary:
    """values holds one final value vector per surviving seed, one per row."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n_seeds = values.shape[0] + n_diverged
    if values.shape[0] == 0 or values.size == 0:
        return BiasVarianceSummary(b=b, n_seeds=n_seeds, n_diverged=n_diverged, flagged=True)

    center = values.mean(axis=0)
    bias = float(np.linalg.norm(center - v_ref))
    variance = float(np.mean(np.sum((values - center) ** 2, axis=1)))
    mse = float(np.mean(np.sum((values - v_ref) ** 2, axis=1)))
    if abs(mse - (bias ** 2 + variance)) > IDENTITY_TOL * max(1.0, mse):
        logger.warning("b=%d: bias-variance identity off by %.3g", b, mse - bias ** 2 - variance)
    return BiasVarianceSummary(b=b, bias=bias, variance=variance, mse=mse, n_seeds=n_seeds, n_diverged=n_diverged)


def bias_variance_by_b(
        cfg: ExperimentConfig,
        b_values: Sequence[int],
        reference: Optional[np.ndarray] = None,
        jobs: int = 1
) -> List[BiasVarianceSummary]:
    if cfg.algo not in PERIODIC_ALGORITHMS:
        raise InvalidArgumentError(f"bias-variance sweeps need a periodic algorithm, got {cfg.algo}")
    setting = build_setting(cfg)
    v_ref = setting.v_pi if reference is None else np.asarray(reference, dtype=np.float64)
    if v_ref.shape != (setting.mdp.n_states,):
        raise InvalidArgumentError(f"reference must have length {setting.mdp.n_states}, got {v_ref.shape}")

    summaries = []
    for b in b_values:
        if b < 1:
            raise InvalidArgumentError(f"period length b must be >= 1, got {b}")
        algo = AlgoConfig(cfg.algo, b=b, lam=cfg.lam)
        records = run_trials(cfg, jobs, algo=algo, setting=setting)
        alive = [record for record in records if not record.diverged]
        values = np.empty((0, setting.mdp.n_states))
        if alive:
            values = np.array([setting.features.phi @ np.array(r.final_theta) for r in alive])
        summary = summarize_bias_variance(b, values, v_ref, n_diverged=len(records) - len(alive))
        logger.info("b=%d: bias %s, variance %s", b, summary.bias, summary.variance)
        summaries.append(summary)
    return summaries
# endregion


# region -----Sweeps-----
def fixed_point_loci(cfg: ExperimentConfig, lambda_values: Sequence[float], setting: Optional[Setting] = None) -> List[LociRow]:
    setting = setting or build_setting(cfg)
    projection = v_pi_projection(cfg, setting)
    args = (setting.features, setting.d_mu, setting.p_pi, setting.r_pi, setting.gamma)
    rows = []
    for lam in lambda_values:
        theta = finite_b_fixed_point(*args, lam, cfg.b)
        rows.extend(
            LociRow(lam=lam, b=cfg.b, dim=i, theta_fixed=float(theta[i]), theta_projection=float(projection[i]))
            for i in range(setting.features.d)
        )
    return rows


def sweep_lambda(cfg: ExperimentConfig, lambda_values: Sequence[float], jobs: int = 1) -> List[LambdaSweepRow]:
    setting = build_setting(cfg)
    projection = v_pi_projection(cfg, setting)
    args = (setting.features, setting.d_mu, setting.p_pi, setting.r_pi, setting.gamma)
    rows = []
    for lam in lambda_values:
        if not 0.0 <= lam <= 1.0:
            raise InvalidArgumentError(f"lambda must lie in [0, 1], got {lam}")
        distance = float(np.linalg.norm(finite_b_fixed_point(*args, lam, cfg.b) - projection))
        mean = std = None
        if not cfg.loci_only:
            records = run_trials(cfg, jobs, algo=AlgoConfig("per-etd-lambda", b=cfg.b, lam=lam), setting=setting)
            mean, std = _mean_std(final_errors(records))
        logger.info("lambda=%.3g: final error %s, fixed-point distance %.4g", lam, mean, distance)
        rows.append(LambdaSweepRow(lam=lam, final_error_mean=mean, final_error_std=std, fixedpoint_dist_to_projection=distance))
    return rows


def sweep_rho(cfg: ExperimentConfig, values: Sequence[float], vary: str, jobs: int = 1) -> List[RhoSweepRow]:
    if cfg.mdp != "baird":
        raise InvalidArgumentError("policy sweeps rebuild Baird policies; set mdp = baird")
    if vary not in ("target", "behavior"):
        raise InvalidArgumentError(f"vary must be target or behavior, got {vary!r}")
    key = "p_solid_target" if vary == "target" else "p_solid_behavior"

    rows = []
    for value in values:
        swept = cfg.model_copy(update={key: value, "target_probs": None, "behavior_probs": None})
        setting = build_setting(swept)
        mismatch = rho_max(setting.target, setting.behavior)
        logger.info("%s solid probability %.4g: rho_max %.4g", vary, value, mismatch)
        for point in aggregate_trials(run_trials(swept, jobs, setting=setting)):
            rows.append(RhoSweepRow(rho_max=mismatch, iteration=point.iteration, error_mean=point.mean, error_std=point.std))
    return rows
# endregion


# region -----Operator Probes-----
def operator_probe(
        mdp: FiniteMdp,
        target: Policy,
        behavior: Policy,
        features: FeatureMap,
        theta: np.ndarray,
        b: int,
        lam: Optional[float],
        n_samples: int,
        seed: int,
        start_state: Optional[int] = None
) -> ProbeResult:
    """Evaluates the empirical operator on back-to-back windows of one trajectory."""
    if n_samples < 2:
        raise InvalidArgumentError(f"n_samples must be >= 2, got {n_samples}")
    sampler = TrajectorySampler(mdp, target, behavior, seed, start_state=start_state)
    samples = np.empty((n_samples, features.d))
    for k in range(n_samples):
        window = sample_window(sampler, b)
        if lam is None:
            samples[k] = empirical_operator0(window, theta, mdp.gamma, features)
        else:
            samples[k] = empirical_operator_lambda(window, theta, mdp.gamma, lam, features)

    root_n = math.sqrt(n_samples)
    squared_norms = np.sum(samples ** 2, axis=1)
    return ProbeResult(
        b=b,
        lam=lam,
        n_samples=n_samples,
        mean=samples.mean(axis=0).tolist(),
        mean_se=(samples.std(axis=0, ddof=1) / root_n).tolist(),
        covariance_trace=float(np.sum(samples.var(axis=0, ddof=1))),
        second_moment=float(squared_norms.mean()),
        second_moment_se=float(squared_norms.std(ddof=1) / root_n),
    )


def probe_by_b(cfg: ExperimentConfig, b_values: Sequence[int]) -> List[ProbeResult]:
    setting = build_setting(cfg)
    theta = presets.probe_theta(cfg, setting.features.d)
    lam = cfg.lam if cfg.algo in LAMBDA_ALGORITHMS else None
    return [
        operator_probe(
            setting.mdp, setting.target, setting.behavior, setting.features, theta, b, lam,
            cfg.n_samples, cfg.base_seed + k, start_state=cfg.start_state,
        )
        for k, b in enumerate(b_values)
    ]


def variance_growth_rate(b_values: Sequence[int], second_moments: Sequence[float]) -> float:
    """Least-squares slope of log second moment against b."""
    b_values = np.asarray(b_values, dtype=np.float64)
    second_moments = np.asarray(second_moments, dtype=np.float64)
    if b_values.shape != second_moments.shape or b_values.shape[0] < 2:
        raise InvalidArgumentError("need at least two (b, second moment) pairs of equal length")
    if np.any(second_moments <= 0):
        raise InvalidArgumentError("second moments must be positive")
    slope, _ = np.polyfit(b_values, np.log(second_moments), 1)
    return float(slope)
# endregion


# region -----Fixed Point Report-----
def fixed_point_report(
        cfg: ExperimentConfig,
        b: Optional[int] = None,
        T: Optional[int] = None,
        chi: Optional[float] = None,
        c_b: Optional[float] = None
) -> FixedPointReport:
    setting = build_setting(cfg)
    gamma = setting.gamma
    variant = "etd0" if cfg.lam == 0 else "etd_lambda"
    f = emphatic_f(setting.d_mu, setting.p_pi, gamma)
    model, theta = etd_lambda_fixed_point(setting.features, f, setting.d_mu, setting.p_pi, setting.r_pi, gamma, cfg.lam)
    constants = theory_constants(model, setting.features, theta, setting.v_pi)
    mismatch = rho_max(setting.target, setting.behavior)
    params = BSelectorParams.from_chi(gamma, gamma if chi is None else chi, mismatch, c_b)

    theta_b = selected_b = None
    if b is not None:
        args = (setting.features, setting.d_mu, setting.p_pi, setting.r_pi, gamma)
        theta_b = finite_b_fixed_point(*args, cfg.lam, b).tolist()
    if T is not None:
        selected_b = select_b(params, gamma, T, constants.mu, setting.features.b_phi, variant)

    return FixedPointReport(
        lam=cfg.lam,
        theta=theta.tolist(),
        mu=constants.mu,
        lipschitz=constants.lip,
        t0=constants.t0,
        eps_approx=constants.eps_approx,
        condition=condition_number(model.a_matrix),
        rho_max=mismatch,
        variance_regime=variance_regime(gamma, mismatch),
        rate_exponent=rate_exponent(gamma, mismatch, params.xi, variant),
        emphatic_mass=float(np.sum(f)),
        b=b,
        theta_b=theta_b,
        selected_b=selected_b,
    )
# endregion
