# region -----External Imports-----
import logging
import math
from pathlib import Path
from typing import Dict, Optional

import typer
from typing_extensions import Annotated
# endregion

# region -----Internal Imports-----
from config import JOBS
from ..exceptions import DivergenceError, InvalidArgumentError
from ..mdp import rho_max
from ..storage import (
    open_output,
    write_bias_variance,
    write_curves,
    write_fixed_point,
    write_lambda_sweep,
    write_loci,
    write_probes,
    write_rho_sweep,
)
from . import services
from .schemas import CliConfig, ExperimentConfig
from .settings_file import build_config, split_list
# endregion

# region -----Supporting Variables-----
logger = logging.getLogger(__name__)

FigureOpt = Annotated[Optional[str], typer.Option("--figure", help="Figure preset: 1a, 1b, 2, 3, 5, 6 or 7; 2-phiN, 3-phiN, 6-bN and 7-bN pick one panel.")]
ConfigOpt = Annotated[Optional[Path], typer.Option("--config", help="INI file with [mdp], [features], [algo], [experiment].")]
OutOpt = Annotated[Optional[str], typer.Option("--out", help="Output CSV path; '-' writes to stdout.")]
JobsOpt = Annotated[int, typer.Option("--jobs", min=1, help="Trials run concurrently.")]
SeedOpt = Annotated[Optional[int], typer.Option("--base-seed", help="Trial k uses seed base_seed + k.")]

PresetOpt = Annotated[Optional[str], typer.Option("--preset", help="MDP preset: baird or file.")]
MdpFileOpt = Annotated[Optional[Path], typer.Option("--mdp-file", help="MDP text file, used with --preset file.")]
TargetOpt = Annotated[Optional[float], typer.Option("--target", help="Solid-action probability of the target policy.")]
BehaviorOpt = Annotated[Optional[float], typer.Option("--behavior", help="Solid-action probability of the behavior policy.")]
FeaturesOpt = Annotated[Optional[str], typer.Option("--features", help="phi1, phi2, phi3, tabular or file.")]
FeaturesFileOpt = Annotated[Optional[Path], typer.Option("--features-file", help="CSV feature matrix, one row per state.")]
StartOpt = Annotated[Optional[int], typer.Option("--start-state", help="Fixed start state instead of a draw from d_mu.")]

AlgoOpt = Annotated[Optional[str], typer.Option("--algo", help="td0, etd0, etd-lambda, per-etd0 or per-etd-lambda.")]
AlgosOpt = Annotated[Optional[str], typer.Option("--algos", help="Comma-separated algorithms run side by side.")]
BOpt = Annotated[Optional[int], typer.Option("--b", help="Period length of the periodic algorithms.")]
BValuesOpt = Annotated[Optional[str], typer.Option("--b-values", help="Comma-separated period lengths.")]
LambdaOpt = Annotated[Optional[float], typer.Option("--lambda", help="Trace-decay parameter in [0, 1].")]
LambdaValuesOpt = Annotated[Optional[str], typer.Option("--lambda-values", help="Comma-separated lambda grid.")]
StepsizeOpt = Annotated[Optional[str], typer.Option("--stepsize", help="constant, diminishing or theory.")]
EtaOpt = Annotated[Optional[float], typer.Option("--eta", help="Constant stepsize.")]
ProjectionOpt = Annotated[Optional[str], typer.Option("--projection", help="off, theory or radius.")]
RadiusOpt = Annotated[Optional[float], typer.Option("--radius", help="Projection radius for --projection radius.")]

TOpt = Annotated[Optional[int], typer.Option("--T", help="Outer iterations per trial.")]
BudgetOpt = Annotated[Optional[int], typer.Option("--budget", help="Transitions per trial; overrides --T per algorithm.")]
SeedsOpt = Annotated[Optional[int], typer.Option("--seeds", help="Trials per configuration.")]
StrideOpt = Annotated[Optional[int], typer.Option("--stride", help="Snapshot every stride-th iteration.")]
PointsOpt = Annotated[Optional[int], typer.Option("--points", help="Approximate snapshots per trial; overrides --stride.")]
MetricOpt = Annotated[Optional[str], typer.Option("--metric", help="value-l2, value-rms or param-l2.")]
ReferenceOpt = Annotated[Optional[str], typer.Option("--reference", help="v-pi, theta-star, theta-lambda or finite-b.")]
ThresholdOpt = Annotated[Optional[float], typer.Option("--threshold", help="Divergence threshold on ||theta|| and |F|.")]
# endregion


# region -----Helper Functions-----
def _list(raw: Optional[str]):
    return None if raw is None else split_list(raw)


def _problem(preset, mdp_file, target, behavior, features, features_file) -> Dict[str, object]:
    return {
        "mdp": preset,
        "mdp_file": mdp_file,
        "p_solid_target": target,
        "p_solid_behavior": behavior,
        "features": features,
        "features_file": features_file,
    }


def _experiment_config(cli: CliConfig) -> ExperimentConfig:
    overrides = dict(cli.overrides)
    overrides["base_seed"] = cli.base_seed
    return build_config(cli.subcommand, cli.figure, cli.config_path, overrides)
# endregion


# region -----Analytic Commands-----
def fixed_point(
        config: ConfigOpt = None,
        out: OutOpt = None,
        preset: PresetOpt = None,
        mdp_file: MdpFileOpt = None,
        target: TargetOpt = None,
        behavior: BehaviorOpt = None,
        features: FeaturesOpt = None,
        features_file: FeaturesFileOpt = None,
        lam: LambdaOpt = None,
        b: Annotated[Optional[int], typer.Option("--b", help="Also solve the finite-period fixed point.")] = None,
        T: Annotated[Optional[int], typer.Option("--T", help="Also select b for this many iterations.")] = None,
        chi: Annotated[Optional[float], typer.Option("--chi", help="Mixing rate; defaults to gamma.")] = None,
        c_b: Annotated[Optional[float], typer.Option("--c-b", help="Bias constant for the first b branch.")] = None,
):
    """Solves the emphatic fixed point and prints its theory constants."""
    cli = CliConfig(
        subcommand="fixed-point",
        config_path=config,
        out=out,
        overrides={**_problem(preset, mdp_file, target, behavior, features, features_file), "lam": lam},
    )
    cfg = _experiment_config(cli)
    report = services.fixed_point_report(cfg, b=b, T=T, chi=chi, c_b=c_b)

    typer.echo(f"mdp: {cfg.mdp}  features: {cfg.features}  lambda: {report.lam:g}")
    typer.echo(f"theta*: {' '.join(f'{x:.10g}' for x in report.theta)}")
    typer.echo(f"mu: {report.mu:.10g}")
    typer.echo(f"L: {report.lipschitz:.10g}")
    typer.echo(f"t0: {report.t0:.10g}")
    typer.echo(f"eps_approx: {report.eps_approx:.10g}")
    typer.echo(f"condition: {report.condition:.6g}")
    typer.echo(f"emphatic mass: {report.emphatic_mass:.10g}")
    typer.echo(f"rho_max: {report.rho_max:.6g}  variance regime: {report.variance_regime}  "
               f"rate exponent: {report.rate_exponent:.6g}")
    if report.theta_b is not None:
        typer.echo(f"theta_b (b={report.b}): {' '.join(f'{x:.10g}' for x in report.theta_b)}")
    if report.selected_b is not None:
        typer.echo(f"selected b (T={T}): {report.selected_b}")

    if cli.out is not None:
        with open_output(cli.out) as stream:
            write_fixed_point(stream, report)


def probe(
        config: ConfigOpt = None,
        out: OutOpt = None,
        base_seed: SeedOpt = None,
        preset: PresetOpt = None,
        mdp_file: MdpFileOpt = None,
        target: TargetOpt = None,
        behavior: BehaviorOpt = None,
        features: FeaturesOpt = None,
        features_file: FeaturesFileOpt = None,
        start_state: StartOpt = None,
        algo: AlgoOpt = None,
        lam: LambdaOpt = None,
        b: BOpt = None,
        b_values: BValuesOpt = None,
        samples: Annotated[Optional[int], typer.Option("--samples", help="Windows drawn per period length.")] = None,
        theta: Annotated[Optional[str], typer.Option("--theta", help="Comma-separated probe point; zero by default.")] = None,
):
    """Monte-Carlo mean, covariance trace and second moment of the empirical operator."""
    cli = CliConfig(
        subcommand="probe",
        config_path=config,
        out=out,
        base_seed=base_seed,
        overrides={
            **_problem(preset, mdp_file, target, behavior, features, features_file),
            "start_state": start_state, "algo": algo, "lam": lam, "b": b, "b_values": _list(b_values),
            "n_samples": samples, "probe_theta": _list(theta),
        },
    )
    cfg = _experiment_config(cli)
    b_grid = cfg.b_values or [cfg.b]
    results = services.probe_by_b(cfg, b_grid)
    with open_output(cli.out) as stream:
        write_probes(stream, results)

    if len(results) > 1:
        slope = services.variance_growth_rate(b_grid, [r.second_moment for r in results])
        setting = services.build_setting(cfg)
        growth = setting.gamma ** 2 * rho_max(setting.target, setting.behavior)
        typer.echo(f"second-moment growth rate per unit b: {slope:.6g} (log gamma^2 rho_max = {math.log(growth):.6g})", err=True)
# endregion


# region -----Training Commands-----
def run(
        figure: FigureOpt = None,
        config: ConfigOpt = None,
        out: OutOpt = None,
        jobs: JobsOpt = JOBS,
        base_seed: SeedOpt = None,
        preset: PresetOpt = None,
        mdp_file: MdpFileOpt = None,
        target: TargetOpt = None,
        behavior: BehaviorOpt = None,
        features: FeaturesOpt = None,
        features_file: FeaturesFileOpt = None,
        start_state: StartOpt = None,
        algo: AlgoOpt = None,
        algos: AlgosOpt = None,
        b: BOpt = None,
        b_values: BValuesOpt = None,
        lam: LambdaOpt = None,
        stepsize: StepsizeOpt = None,
        eta: EtaOpt = None,
        step_mu: Annotated[Optional[float], typer.Option("--step-mu", help="mu of a diminishing stepsize.")] = None,
        step_t0: Annotated[Optional[float], typer.Option("--step-t0", help="t0 of a diminishing stepsize.")] = None,
        projection: ProjectionOpt = None,
        radius: RadiusOpt = None,
        T: TOpt = None,
        budget: BudgetOpt = None,
        seeds: SeedsOpt = None,
        stride: StrideOpt = None,
        points: PointsOpt = None,
        metric: MetricOpt = None,
        reference: ReferenceOpt = None,
        threshold: ThresholdOpt = None,
):
    """Trains every algorithm variant over all seeds and writes error curves."""
    cli = CliConfig(
        subcommand="run",
        config_path=config,
        figure=figure,
        out=out,
        base_seed=base_seed,
        jobs=jobs,
        overrides={
            **_problem(preset, mdp_file, target, behavior, features, features_file),
            "start_state": start_state, "algo": algo, "algos": _list(algos), "b": b, "b_values": _list(b_values),
            "lam": lam, "stepsize": stepsize, "eta": eta, "step_mu": step_mu, "step_t0": step_t0,
            "projection": projection, "radius": radius, "T": T, "budget": budget, "n_seeds": seeds,
            "stride": stride, "points": points, "metric": metric, "reference": reference, "threshold": threshold,
        },
    )
    cfg = _experiment_config(cli)
    records = services.run_experiment(cfg, cli.jobs)
    with open_output(cli.out) as stream:
        write_curves(stream, records)
    if records and all(record.diverged for record in records):
        raise DivergenceError(f"all {len(records)} trials diverged")


def sweep_b(
        figure: FigureOpt = None,
        config: ConfigOpt = None,
        out: OutOpt = None,
        jobs: JobsOpt = JOBS,
        base_seed: SeedOpt = None,
        preset: PresetOpt = None,
        mdp_file: MdpFileOpt = None,
        target: TargetOpt = None,
        behavior: BehaviorOpt = None,
        features: FeaturesOpt = None,
        features_file: FeaturesFileOpt = None,
        start_state: StartOpt = None,
        algo: AlgoOpt = None,
        b_values: BValuesOpt = None,
        lam: LambdaOpt = None,
        stepsize: StepsizeOpt = None,
        eta: EtaOpt = None,
        projection: ProjectionOpt = None,
        radius: RadiusOpt = None,
        T: TOpt = None,
        budget: BudgetOpt = None,
        seeds: SeedsOpt = None,
        threshold: ThresholdOpt = None,
):
    """Bias and variance of the final value estimate for each period length."""
    cli = CliConfig(
        subcommand="sweep-b",
        config_path=config,
        figure=figure,
        out=out,
        base_seed=base_seed,
        jobs=jobs,
        overrides={
            **_problem(preset, mdp_file, target, behavior, features, features_file),
            "start_state": start_state, "algo": algo, "b_values": _list(b_values), "lam": lam,
            "stepsize": stepsize, "eta": eta, "projection": projection, "radius": radius, "T": T,
            "budget": budget, "n_seeds": seeds, "threshold": threshold,
        },
    )
    cfg = _experiment_config(cli)
    summaries = services.bias_variance_by_b(cfg, cfg.b_values or [cfg.b], jobs=cli.jobs)
    with open_output(cli.out) as stream:
        write_bias_variance(stream, summaries)
    if all(summary.flagged for summary in summaries):
        raise DivergenceError("every trial diverged for every period length")


def sweep_lambda(
        figure: FigureOpt = None,
        config: ConfigOpt = None,
        out: OutOpt = None,
        jobs: JobsOpt = JOBS,
        base_seed: SeedOpt = None,
        preset: PresetOpt = None,
        mdp_file: MdpFileOpt = None,
        target: TargetOpt = None,
        behavior: BehaviorOpt = None,
        features: FeaturesOpt = None,
        features_file: FeaturesFileOpt = None,
        start_state: StartOpt = None,
        b: BOpt = None,
        lambda_values: LambdaValuesOpt = None,
        stepsize: StepsizeOpt = None,
        eta: EtaOpt = None,
        projection: ProjectionOpt = None,
        radius: RadiusOpt = None,
        T: TOpt = None,
        budget: BudgetOpt = None,
        seeds: SeedsOpt = None,
        metric: MetricOpt = None,
        reference: ReferenceOpt = None,
        threshold: ThresholdOpt = None,
        loci_only: Annotated[Optional[bool], typer.Option(
            "--loci-only/--with-runs", help="Emit only the analytic fixed-point loci.")] = None,
):
    """Final PER-ETD(lambda) error and finite-b fixed point across a lambda grid."""
    cli = CliConfig(
        subcommand="sweep-lambda",
        config_path=config,
        figure=figure,
        out=out,
        base_seed=base_seed,
        jobs=jobs,
        overrides={
            **_problem(preset, mdp_file, target, behavior, features, features_file),
            "start_state": start_state, "algo": "per-etd-lambda", "b": b,
            "lambda_values": _list(lambda_values), "stepsize": stepsize, "eta": eta, "projection": projection,
            "radius": radius, "T": T, "budget": budget, "n_seeds": seeds, "metric": metric,
            "reference": reference, "threshold": threshold, "loci_only": loci_only,
        },
    )
    cfg = _experiment_config(cli)
    grid = cfg.lambda_values or [cfg.lam]
    if cfg.loci_only:
        with open_output(cli.out) as stream:
            write_loci(stream, services.fixed_point_loci(cfg, grid))
        return

    rows = services.sweep_lambda(cfg, grid, jobs=cli.jobs)
    with open_output(cli.out) as stream:
        write_lambda_sweep(stream, rows)
    if all(row.final_error_mean is None for row in rows):
        raise DivergenceError("every trial diverged for every lambda")


def sweep_rho(
        figure: FigureOpt = None,
        config: ConfigOpt = None,
        out: OutOpt = None,
        jobs: JobsOpt = JOBS,
        base_seed: SeedOpt = None,
        target: TargetOpt = None,
        behavior: BehaviorOpt = None,
        features: FeaturesOpt = None,
        features_file: FeaturesFileOpt = None,
        start_state: StartOpt = None,
        algo: AlgoOpt = None,
        b: BOpt = None,
        lam: LambdaOpt = None,
        rho_values: Annotated[Optional[str], typer.Option(
            "--values", help="Comma-separated solid-action probabilities to sweep.")] = None,
        vary: Annotated[Optional[str], typer.Option("--vary", help="target or behavior.")] = None,
        stepsize: StepsizeOpt = None,
        eta: EtaOpt = None,
        projection: ProjectionOpt = None,
        radius: RadiusOpt = None,
        T: TOpt = None,
        budget: BudgetOpt = None,
        seeds: SeedsOpt = None,
        stride: StrideOpt = None,
        points: PointsOpt = None,
        metric: MetricOpt = None,
        threshold: ThresholdOpt = None,
):
    """Error curves keyed by rho_max while one Baird policy is swept."""
    cli = CliConfig(
        subcommand="sweep-rho",
        config_path=config,
        figure=figure,
        out=out,
        base_seed=base_seed,
        jobs=jobs,
        overrides={
            "p_solid_target": target, "p_solid_behavior": behavior, "features": features,
            "features_file": features_file, "start_state": start_state, "algo": algo, "b": b, "lam": lam,
            "rho_values": _list(rho_values), "vary": vary, "stepsize": stepsize, "eta": eta,
            "projection": projection, "radius": radius, "T": T, "budget": budget, "n_seeds": seeds,
            "stride": stride, "points": points, "metric": metric, "threshold": threshold,
        },
    )
    cfg = _experiment_config(cli)
    if not cfg.rho_values:
        raise InvalidArgumentError("sweep-rho needs policy values (--values or experiment.rho_values)")
    rows = services.sweep_rho(cfg, cfg.rho_values, cfg.vary, jobs=cli.jobs)
    with open_output(cli.out) as stream:
        write_rho_sweep(stream, rows)
    if rows and all(row.error_mean is None for row in rows):
        raise DivergenceError("every trial diverged for every policy")
# endregion


def register_commands(app: typer.Typer) -> None:
    app.command("fixed-point")(fixed_point)
    app.command("run")(run)
    app.command("sweep-b")(sweep_b)
    app.command("sweep-lambda")(sweep_lambda)
    app.command("sweep-rho")(sweep_rho)
    app.command("probe")(probe)
