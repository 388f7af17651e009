# region -----External Imports-----
import logging
from typing import Tuple

import numpy as np
from scipy import linalg
# endregion

# region -----Internal Imports-----
from .exceptions import CoverageError, ErgodicityError, InvalidArgumentError, NumericalError
from .models import FiniteMdp, InducedChain, Policy
from .numerics import solve_checked
# endregion

# region -----Supporting Variables-----
logger = logging.getLogger(__name__)

BAIRD_STATES = 7
BAIRD_GAMMA = 0.99
DASHED, SOLID = 0, 1

STATIONARY_TOL = 1e-12
POWER_ITERATION_CAP = 10 ** 6
VALUE_RESIDUAL_TOL = 1e-10
# endregion


# region -----Presets-----
def state_independent_policy(n_states: int, action_probs) -> Policy:
    row = np.asarray(action_probs, dtype=np.float64)
    return Policy(np.tile(row, (n_states, 1)))


def baird_mdp(p_solid_target: float, p_solid_behavior: float, gamma: float = BAIRD_GAMMA) -> Tuple[FiniteMdp, Policy, Policy]:
    """Seven-state, two-action counterexample.

    The dashed action moves uniformly to one of the first six states with
    reward 0; the solid action moves to the seventh state with reward 1.
    Both policies are state independent and given by their solid-action
    probability.
    """
    for name, p in (("p_solid_target", p_solid_target), ("p_solid_behavior", p_solid_behavior)):
        if not 0.0 < p < 1.0:
            raise InvalidArgumentError(f"{name} must lie in (0, 1), got {p}")

    transition = np.zeros((BAIRD_STATES, 2, BAIRD_STATES))
    transition[:, DASHED, : BAIRD_STATES - 1] = 1.0 / (BAIRD_STATES - 1)
    transition[:, SOLID, BAIRD_STATES - 1] = 1.0

    reward = np.zeros((BAIRD_STATES, 2))
    reward[:, SOLID] = 1.0

    mdp = FiniteMdp(transition=transition, reward=reward, gamma=gamma)
    target = state_independent_policy(BAIRD_STATES, [1.0 - p_solid_target, p_solid_target])
    behavior = state_independent_policy(BAIRD_STATES, [1.0 - p_solid_behavior, p_solid_behavior])
    return mdp, target, behavior
# endregion


# region -----Chain Construction-----
def _check_policy_shape(mdp: FiniteMdp, policy: Policy) -> None:
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise InvalidArgumentError(
            f"policy shape {policy.probs.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})"
        )


def induced_chain(mdp: FiniteMdp, policy: Policy) -> InducedChain:
    _check_policy_shape(mdp, policy)
    p_pi = np.einsum("sa,sat->st", policy.probs, mdp.transition)
    r_pi = np.sum(policy.probs * mdp.reward, axis=1)
    return InducedChain(p_pi=p_pi, r_pi=r_pi)


def _check_row_stochastic(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise InvalidArgumentError(f"transition matrix must be square, got shape {p.shape}")
    if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > STATIONARY_TOL:
        raise InvalidArgumentError("transition matrix must be row-stochastic")
    return p


def _power_iteration(p: np.ndarray, tol: float) -> np.ndarray:
    n = p.shape[0]
    lazy = 0.5 * (np.eye(n) + p)
    d = np.full(n, 1.0 / n)
    for step in range(POWER_ITERATION_CAP):
        following = d @ lazy
        if np.sum(np.abs(following - d)) <= tol:
            logger.debug("power iteration converged after %d steps", step + 1)
            return following / following.sum()
        d = following
    raise ErgodicityError(f"power iteration did not converge in {POWER_ITERATION_CAP} steps")


def stationary_distribution(p: np.ndarray, tol: float = STATIONARY_TOL) -> np.ndarray:
    p = _check_row_stochastic(p)
    n = p.shape[0]
    basis = linalg.null_space(p.T - np.eye(n))
    if basis.shape[1] > 1:
        raise ErgodicityError(
            f"stationary distribution is not unique ({basis.shape[1]} invariant directions)"
        )
    if basis.shape[1] == 1:
        d = basis[:, 0] / basis[:, 0].sum()
        if np.all(d >= -tol):
            d = np.clip(d, 0.0, None)
            d /= d.sum()
            if np.sum(np.abs(d @ p - d)) <= tol:
                return d
    logger.debug("direct stationary solve inaccurate, falling back to power iteration")
    return _power_iteration(p, tol)


def value_function(chain: InducedChain, gamma: float) -> np.ndarray:
    if not 0.0 < gamma < 1.0:
        raise InvalidArgumentError(f"gamma must lie in (0, 1), got {gamma}")
    system = np.eye(chain.p_pi.shape[0]) - gamma * chain.p_pi
    v = solve_checked(system, chain.r_pi, "value function")
    residual = float(np.max(np.abs(system @ v - chain.r_pi)))
    if residual > VALUE_RESIDUAL_TOL * max(1.0, float(np.linalg.norm(chain.r_pi))):
        raise NumericalError(f"value function residual {residual:.3g} exceeds tolerance")
    return v
# endregion


# region -----Policy Mismatch-----
def importance_ratios(target: Policy, behavior: Policy) -> np.ndarray:
    """pi/mu where the target has mass, 0 elsewhere."""
    if target.probs.shape != behavior.probs.shape:
        raise InvalidArgumentError(
            f"target shape {target.probs.shape} does not match behavior shape {behavior.probs.shape}"
        )
    uncovered = np.argwhere((target.probs > 0) & (behavior.probs == 0))
    if uncovered.size:
        state, action = (int(i) for i in uncovered[0])
        raise CoverageError(state, action)
    ratios = np.zeros_like(target.probs)
    support = target.probs > 0
    ratios[support] = target.probs[support] / behavior.probs[support]
    return ratios


def rho_max(target: Policy, behavior: Policy) -> float:
    return float(np.max(importance_ratios(target, behavior)))
# endregion
