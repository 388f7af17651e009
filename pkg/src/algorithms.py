# region -----External Imports-----
import logging
from typing import Callable, Dict, Optional

import numpy as np
# endregion

# region -----Internal Imports-----
from config import DIVERGENCE_THRESHOLD
from .exceptions import InvalidArgumentError
from .features import project_ball
from .models import (
    AlgoConfig,
    FeatureMap,
    FiniteMdp,
    LearnerState,
    Policy,
    ProjectionBall,
    SampleWindow,
    StepsizeSchedule,
    TheoryConstants,
    TraceState,
    TrainingTrace,
    Transition,
)
from .sampler import TrajectorySampler, sample_window
# endregion

# region -----Supporting Variables-----
logger = logging.getLogger(__name__)
# endregion


# region -----Stepsizes-----
def stepsize_at(schedule: StepsizeSchedule, t: int) -> float:
    if t < 0:
        raise InvalidArgumentError(f"iteration index must be nonnegative, got {t}")
    if schedule.kind == "constant":
        return schedule.value
    return 2.0 / (schedule.mu * (t + schedule.t0))


def theory_schedule(constants: TheoryConstants) -> StepsizeSchedule:
    return StepsizeSchedule.diminishing(mu=constants.mu, t0=constants.t0)
# endregion


# region -----Single-Transition Updates-----
def td_error(theta: np.ndarray, tr: Transition, gamma: float, features: FeatureMap) -> float:
    return tr.r + gamma * float(features.phi[tr.s_next] @ theta) - float(features.phi[tr.s] @ theta)


def td0_step(theta: np.ndarray, tr: Transition, eta: float, features: FeatureMap, gamma: float) -> np.ndarray:
    return theta + eta * td_error(theta, tr, gamma, features) * features.phi[tr.s]


def followon_step(f: float, rho_prev: float, gamma: float) -> float:
    return gamma * rho_prev * f + 1.0


def etd0_step(
        state: LearnerState,
        tr: Transition,
        eta: float,
        features: FeatureMap,
        ball: ProjectionBall,
        gamma: float
) -> LearnerState:
    # update with F_t, then advance F with rho_t for the next call
    trace = state.trace
    delta = td_error(state.theta, tr, gamma, features)
    state.theta = project_ball(state.theta + eta * tr.rho * trace.f * delta * features.phi[tr.s], ball)
    trace.f = followon_step(trace.f, tr.rho, gamma)
    trace.m = trace.f
    state.prev_rho = tr.rho
    return state


def etd_lambda_step(
        state: LearnerState,
        tr: Transition,
        eta: float,
        features: FeatureMap,
        ball: ProjectionBall,
        gamma: float
) -> LearnerState:
    trace = state.trace
    phi = features.phi[tr.s]
    if trace.e is None:
        trace.f, trace.m, trace.e = 1.0, 1.0, phi.copy()
    else:
        trace.f = followon_step(trace.f, state.prev_rho, gamma)
        trace.m = state.lam + (1.0 - state.lam) * trace.f
        trace.e = gamma * state.lam * state.prev_rho * trace.e + trace.m * phi
    delta = td_error(state.theta, tr, gamma, features)
    state.theta = project_ball(state.theta + eta * tr.rho * delta * trace.e, ball)
    state.prev_rho = tr.rho
    return state
# endregion


# region -----Empirical Emphatic Operators-----
def _check_window(window: SampleWindow) -> None:
    if window.b < 1:
        raise InvalidArgumentError(f"window must hold at least 2 transitions (b >= 1), got {len(window.transitions)}")


def _restarted_trace0(window: SampleWindow, gamma: float, features: FeatureMap) -> TraceState:
    f = 1.0
    for tr in window.transitions[:-1]:
        f = followon_step(f, tr.rho, gamma)
    return TraceState(f=f, m=f, e=f * features.phi[window.transitions[-1].s])


def _restarted_trace_lambda(window: SampleWindow, gamma: float, lam: float, features: FeatureMap) -> TraceState:
    items = window.transitions
    f, m, e = 1.0, 1.0, features.phi[items[0].s].copy()
    for previous, current in zip(items, items[1:]):
        f = followon_step(f, previous.rho, gamma)
        m = lam + (1.0 - lam) * f
        e = gamma * lam * previous.rho * e + m * features.phi[current.s]
    return TraceState(f=f, m=m, e=e)


def _apply_operator(e: np.ndarray, last: Transition, theta: np.ndarray, gamma: float, features: FeatureMap) -> np.ndarray:
    # rho^b * e^b * ((phi^b - gamma phi^{b+1})^T theta - r^b)
    difference = features.phi[last.s] - gamma * features.phi[last.s_next]
    return (last.rho * (float(difference @ theta) - last.r)) * e


def empirical_operator0(window: SampleWindow, theta: np.ndarray, gamma: float, features: FeatureMap) -> np.ndarray:
    _check_window(window)
    trace = _restarted_trace0(window, gamma, features)
    return _apply_operator(trace.e, window.transitions[-1], theta, gamma, features)


def empirical_operator_lambda(
        window: SampleWindow,
        theta: np.ndarray,
        gamma: float,
        lam: float,
        features: FeatureMap
) -> np.ndarray:
    _check_window(window)
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgumentError(f"lambda must lie in [0, 1], got {lam}")
    trace = _restarted_trace_lambda(window, gamma, lam, features)
    return _apply_operator(trace.e, window.transitions[-1], theta, gamma, features)
# endregion


# region -----Outer Iterations-----
def _periodic_iterate(
        state: LearnerState,
        sampler: TrajectorySampler,
        schedule: StepsizeSchedule,
        ball: ProjectionBall,
        features: FeatureMap,
        trace_builder: Callable[[SampleWindow, float], TraceState]
) -> LearnerState:
    if state.b < 1:
        raise InvalidArgumentError(f"period length b must be >= 1, got {state.b}")
    gamma = sampler.mdp.gamma
    window = sample_window(sampler, state.b)
    eta = stepsize_at(schedule, state.t)
    state.trace = trace_builder(window, gamma)
    direction = _apply_operator(state.trace.e, window.transitions[-1], state.theta, gamma, features)
    state.theta = project_ball(state.theta - eta * direction, ball)
    state.t += 1
    state.transitions += state.b + 1
    return state


def per_etd0_iterate(
        state: LearnerState,
        sampler: TrajectorySampler,
        schedule: StepsizeSchedule,
        ball: ProjectionBall,
        features: FeatureMap
) -> LearnerState:
    return _periodic_iterate(
        state, sampler, schedule, ball, features,
        lambda window, gamma: _restarted_trace0(window, gamma, features)
    )


def per_etd_lambda_iterate(
        state: LearnerState,
        sampler: TrajectorySampler,
        schedule: StepsizeSchedule,
        ball: ProjectionBall,
        features: FeatureMap
) -> LearnerState:
    if not 0.0 <= state.lam <= 1.0:
        raise InvalidArgumentError(f"lambda must lie in [0, 1], got {state.lam}")
    return _periodic_iterate(
        state, sampler, schedule, ball, features,
        lambda window, gamma: _restarted_trace_lambda(window, gamma, state.lam, features)
    )


def _td0_iterate(state, sampler, schedule, ball, features):
    tr = sampler.sample()
    state.theta = td0_step(state.theta, tr, stepsize_at(schedule, state.t), features, sampler.mdp.gamma)
    state.t += 1
    state.transitions += 1
    return state


def _vanilla_iterate(step):
    def iterate(state, sampler, schedule, ball, features):
        tr = sampler.sample()
        step(state, tr, stepsize_at(schedule, state.t), features, ball, sampler.mdp.gamma)
        state.t += 1
        state.transitions += 1
        return state
    return iterate


ITERATIONS: Dict[str, Callable] = {
    "td0": _td0_iterate,
    "etd0": _vanilla_iterate(etd0_step),
    "etd-lambda": _vanilla_iterate(etd_lambda_step),
    "per-etd0": per_etd0_iterate,
    "per-etd-lambda": per_etd_lambda_iterate,
}
# endregion


# region -----Training Loop-----
def new_learner(algo: AlgoConfig, d: int, theta0: Optional[np.ndarray] = None) -> LearnerState:
    theta = np.zeros(d) if theta0 is None else np.array(theta0, dtype=np.float64)
    if theta.shape != (d,):
        raise InvalidArgumentError(f"theta0 must have shape ({d},), got {theta.shape}")
    trace = TraceState(f=1.0, m=1.0) if algo.algo in ("etd0", "etd-lambda") else None
    return LearnerState(theta=theta, algo=algo.algo, b=algo.b, lam=algo.lam, trace=trace)


def is_diverged(state: LearnerState, threshold: float = DIVERGENCE_THRESHOLD) -> bool:
    if not np.all(np.isfinite(state.theta)) or float(np.linalg.norm(state.theta)) > threshold:
        return True
    return state.trace is not None and not abs(state.trace.f) <= threshold


def _snapshot_due(t: int, stride: int, total: int) -> bool:
    return t % stride == 0 or t == total


def run_training(
        algo: AlgoConfig,
        mdp: FiniteMdp,
        target: Policy,
        behavior: Policy,
        features: FeatureMap,
        schedule: StepsizeSchedule,
        ball: ProjectionBall,
        T: int,
        seed: int,
        stride: int = 1,
        start_state: Optional[int] = None,
        theta0: Optional[np.ndarray] = None,
        threshold: float = DIVERGENCE_THRESHOLD
) -> TrainingTrace:
    """Snapshots theta_0 and every stride-th outer iteration up to theta_T.

    A vanilla iteration consumes one transition, a periodic one b+1. Training
    stops at the first iteration whose theta or follow-on trace exceeds the
    threshold; that iteration is the last snapshot.
    """
    if T < 0:
        raise InvalidArgumentError(f"T must be nonnegative, got {T}")
    if stride < 1:
        raise InvalidArgumentError(f"stride must be >= 1, got {stride}")
    if features.n_states != mdp.n_states:
        raise InvalidArgumentError(f"features cover {features.n_states} states, MDP has {mdp.n_states}")

    sampler = TrajectorySampler(mdp, target, behavior, seed, start_state=start_state)
    state = new_learner(algo, features.d, theta0)
    iterate = ITERATIONS[algo.algo]

    iterations, transitions, thetas = [0], [0], [state.theta.copy()]
    with np.errstate(over="ignore", invalid="ignore"):
        while state.t < T:
            iterate(state, sampler, schedule, ball, features)
            if is_diverged(state, threshold):
                state.diverged = True
            if state.diverged or _snapshot_due(state.t, stride, T):
                iterations.append(state.t)
                transitions.append(state.transitions)
                thetas.append(state.theta.copy())
            if state.diverged:
                logger.warning("%s diverged at iteration %d (seed %d)", algo.algo, state.t, seed)
                break

    logger.debug("%s seed %d: %d iterations, %d transitions", algo.algo, seed, state.t, state.transitions)
    return TrainingTrace(
        iterations=tuple(iterations),
        transitions=tuple(transitions),
        thetas=np.array(thetas),
        diverged=state.diverged,
    )
# endregion
