# region -----External Imports-----
import csv
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, TextIO

import numpy as np
# endregion

# region -----Internal Imports-----
from .exceptions import InvalidArgumentError
from .experiments.schemas import BiasVarianceSummary, FixedPointReport, LambdaSweepRow, LociRow, ProbeResult, RhoSweepRow, RunRecord
from .models import FeatureMap, FiniteMdp
# endregion

# region -----Supporting Variables-----
logger = logging.getLogger(__name__)

CURVES_HEADER = ["algo", "b", "lambda", "seed", "iter", "transitions", "error", "diverged"]
BIAS_VARIANCE_HEADER = ["b", "bias", "variance", "n_seeds", "n_diverged"]
LAMBDA_SWEEP_HEADER = ["lambda", "final_error_mean", "final_error_std", "fixedpoint_dist_to_projection"]
LOCI_HEADER = ["lambda", "b", "dim", "theta_fixed", "theta_projection"]
RHO_SWEEP_HEADER = ["rho_max", "iter", "error_mean", "error_std"]
PROBE_HEADER = ["b", "lambda", "n_samples", "mean", "mean_se", "covariance_trace", "second_moment", "second_moment_se"]
FIXED_POINT_HEADER = ["lambda", "theta", "mu", "lipschitz", "t0", "eps_approx", "condition", "b", "theta_b", "selected_b"]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return " ".join(_cell(item) for item in value)
    return str(value)
# endregion


# region -----Loaders-----
def _data_lines(path: Path) -> Iterator[tuple]:
    with open(path, "r", encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield number, line.split()


def load_mdp_file(path) -> FiniteMdp:
    """Reads `states actions gamma`, then one `s a r p_0 ... p_{S-1}` line per pair."""
    path = Path(path)
    lines = _data_lines(path)
    try:
        number, header = next(lines)
    except StopIteration:
        raise InvalidArgumentError(f"{path}: empty MDP file")
    if len(header) != 3:
        raise InvalidArgumentError(f"{path}:{number}: header must be 'states actions gamma'")
    try:
        n_states, n_actions, gamma = int(header[0]), int(header[1]), float(header[2])
    except ValueError:
        raise InvalidArgumentError(f"{path}:{number}: malformed header {' '.join(header)!r}")

    transition = np.zeros((n_states, n_actions, n_states))
    reward = np.zeros((n_states, n_actions))
    seen = set()
    for number, fields in lines:
        if len(fields) != 3 + n_states:
            raise InvalidArgumentError(f"{path}:{number}: expected {3 + n_states} fields, got {len(fields)}")
        try:
            s, a = int(fields[0]), int(fields[1])
            values = [float(x) for x in fields[2:]]
        except ValueError:
            raise InvalidArgumentError(f"{path}:{number}: non-numeric field")
        if not (0 <= s < n_states and 0 <= a < n_actions):
            raise InvalidArgumentError(f"{path}:{number}: pair ({s}, {a}) out of range")
        if (s, a) in seen:
            raise InvalidArgumentError(f"{path}:{number}: duplicate pair ({s}, {a})")
        seen.add((s, a))
        reward[s, a] = values[0]
        transition[s, a] = values[1:]

    if len(seen) != n_states * n_actions:
        raise InvalidArgumentError(f"{path}: {n_states * n_actions - len(seen)} state-action pairs missing")
    logger.info("loaded MDP with %d states and %d actions from %s", n_states, n_actions, path)
    return FiniteMdp(transition=transition, reward=reward, gamma=gamma)


def load_features_csv(path) -> FeatureMap:
    """One row per state, one comma-separated column per feature."""
    try:
        phi = np.loadtxt(path, delimiter=",", comments="#", ndmin=2, dtype=np.float64)
    except ValueError as e:
        raise InvalidArgumentError(f"{path}: malformed feature matrix: {e}")
    return FeatureMap(phi)
# endregion


# region -----Writers-----
@contextmanager
def open_output(out: Optional[str]) -> Iterator[TextIO]:
    """`None` or `-` is stdout; anything else is a file path."""
    if out is None or out == "-":
        yield sys.stdout
        return
    with open(out, "w", encoding="utf-8", newline="") as handle:
        yield handle
    logger.info("wrote %s", out)


def _write(stream: TextIO, header: List[str], rows: Iterable[list]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(value) for value in row])


def write_curves(stream: TextIO, records: Iterable[RunRecord]) -> None:
    def rows():
        for record in records:
            last = len(record.points) - 1
            for index, point in enumerate(record.points):
                yield [
                    record.algo, record.b, float(record.lam), record.seed,
                    point.iteration, point.transitions, float(point.error),
                    record.diverged and index == last,
                ]
    _write(stream, CURVES_HEADER, rows())


def write_bias_variance(stream: TextIO, summaries: Iterable[BiasVarianceSummary]) -> None:
    _write(stream, BIAS_VARIANCE_HEADER, (
        [s.b, s.bias, s.variance, s.n_seeds, s.n_diverged] for s in summaries
    ))


def write_lambda_sweep(stream: TextIO, rows: Iterable[LambdaSweepRow]) -> None:
    _write(stream, LAMBDA_SWEEP_HEADER, (
        [float(r.lam), r.final_error_mean, r.final_error_std, r.fixedpoint_dist_to_projection] for r in rows
    ))


def write_loci(stream: TextIO, rows: Iterable[LociRow]) -> None:
    _write(stream, LOCI_HEADER, (
        [float(r.lam), r.b, r.dim, r.theta_fixed, r.theta_projection] for r in rows
    ))


def write_rho_sweep(stream: TextIO, rows: Iterable[RhoSweepRow]) -> None:
    _write(stream, RHO_SWEEP_HEADER, (
        [r.rho_max, r.iteration, r.error_mean, r.error_std] for r in rows
    ))


def write_probes(stream: TextIO, results: Iterable[ProbeResult]) -> None:
    _write(stream, PROBE_HEADER, (
        [p.b, p.lam, p.n_samples, p.mean, p.mean_se, p.covariance_trace, p.second_moment, p.second_moment_se]
        for p in results
    ))


def write_fixed_point(stream: TextIO, report: FixedPointReport) -> None:
    _write(stream, FIXED_POINT_HEADER, [[
        float(report.lam), report.theta, report.mu, report.lipschitz, report.t0, report.eps_approx,
        report.condition, report.b, report.theta_b, report.selected_b,
    ]])
# endregion
