# region -----External Imports-----
import logging
import math
from typing import Literal, Tuple

import numpy as np
from scipy import linalg
# endregion

# region -----Internal Imports-----
from .exceptions import InvalidArgumentError, NumericalError, PositiveDefinitenessError
from .models import BSelectorParams, EmphaticWeights, FeatureMap, OperatorModel, TheoryConstants
from .numerics import solve_checked, spectral_norm
# endregion

# region -----Supporting Variables-----
logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
# ceil() slack so that log(1024)/log(2) style ratios land on the integer
CEIL_SLACK = 1e-9

Variant = Literal["etd0", "etd_lambda"]


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma < 1.0:
        raise InvalidArgumentError(f"gamma must lie in [0, 1), got {gamma}")


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgumentError(f"lambda must lie in [0, 1], got {lam}")


def analytic_operator(model: OperatorModel, theta: np.ndarray) -> np.ndarray:
    """A theta - c, the expected update direction of the recursion."""
    return model.a_matrix @ theta - model.c_vector


def _solve_model(model: OperatorModel, what: str) -> np.ndarray:
    theta = solve_checked(model.a_matrix, model.c_vector, what)
    residual = float(np.linalg.norm(analytic_operator(model, theta)))
    if residual > RESIDUAL_TOL * (1.0 + float(np.linalg.norm(model.c_vector))):
        raise NumericalError(f"{what}: residual {residual:.3g} exceeds tolerance")
    return theta
# endregion


# region -----Emphatic Weights-----
def emphatic_f(d_mu: np.ndarray, p_pi: np.ndarray, gamma: float) -> np.ndarray:
    """Solves f = d_mu + gamma P_pi^T f."""
    _check_gamma(gamma)
    d_mu = np.asarray(d_mu, dtype=np.float64)
    system = np.eye(d_mu.shape[0]) - gamma * np.asarray(p_pi).T
    f = solve_checked(system, d_mu, "emphatic weights")
    if float(np.max(np.abs(system @ f - d_mu))) > RESIDUAL_TOL:
        raise NumericalError("emphatic weights: residual exceeds tolerance")
    return f


def emphatic_weights(d_mu: np.ndarray, p_pi: np.ndarray, gamma: float, lam: float) -> EmphaticWeights:
    _check_lambda(lam)
    f = emphatic_f(d_mu, p_pi, gamma)
    return EmphaticWeights(f=f, m=lam * np.asarray(d_mu) + (1.0 - lam) * f, lam=lam)
# endregion


# region -----Fixed Points-----
def etd0_fixed_point(
        features: FeatureMap,
        f: np.ndarray,
        p_pi: np.ndarray,
        r_pi: np.ndarray,
        gamma: float
) -> Tuple[OperatorModel, np.ndarray]:
    _check_gamma(gamma)
    phi = features.phi
    weighted = phi.T * np.asarray(f)[None, :]
    model = OperatorModel(
        a_matrix=weighted @ (phi - gamma * (p_pi @ phi)),
        c_vector=weighted @ r_pi,
    )
    return model, _solve_model(model, "ETD(0) fixed point")


def etd_lambda_fixed_point(
        features: FeatureMap,
        f: np.ndarray,
        d_mu: np.ndarray,
        p_pi: np.ndarray,
        r_pi: np.ndarray,
        gamma: float,
        lam: float
) -> Tuple[OperatorModel, np.ndarray]:
    _check_gamma(gamma)
    _check_lambda(lam)
    phi = features.phi
    n_states = phi.shape[0]
    m = lam * np.asarray(d_mu) + (1.0 - lam) * np.asarray(f)
    resolvent = solve_checked(np.eye(n_states) - gamma * lam * p_pi, np.eye(n_states), "(I - gamma lambda P_pi) inverse")
    weighted = (phi.T * m[None, :]) @ resolvent
    model = OperatorModel(
        a_matrix=weighted @ (phi - gamma * (p_pi @ phi)),
        c_vector=weighted @ r_pi,
    )
    return model, _solve_model(model, f"ETD(lambda={lam}) fixed point")


def finite_b_operator(
        features: FeatureMap,
        d_mu: np.ndarray,
        p_pi: np.ndarray,
        r_pi: np.ndarray,
        gamma: float,
        lam: float,
        b: int
) -> OperatorModel:
    """Expected empirical operator of a restarted trace of length b.

    Under a stationary window start, E[T_hat(theta)] = A theta - c exactly,
    with A = beta_b (I - gamma P_pi) Phi and c = beta_b r_pi.
    """
    _check_gamma(gamma)
    _check_lambda(lam)
    if b < 0:
        raise InvalidArgumentError(f"period length b must be nonnegative, got {b}")
    phi = features.phi
    d_mu = np.asarray(d_mu, dtype=np.float64)
    phi_d = phi.T * d_mu[None, :]

    f_bar = d_mu.copy()
    beta = phi_d.copy()
    for _ in range(b):
        f_bar = d_mu + gamma * (p_pi.T @ f_bar)
        beta = lam * phi_d + (1.0 - lam) * (phi.T * f_bar[None, :]) + gamma * lam * (beta @ p_pi)

    return OperatorModel(
        a_matrix=beta @ (phi - gamma * (p_pi @ phi)),
        c_vector=beta @ r_pi,
    )


def finite_b_fixed_point(
        features: FeatureMap,
        d_mu: np.ndarray,
        p_pi: np.ndarray,
        r_pi: np.ndarray,
        gamma: float,
        lam: float,
        b: int
) -> np.ndarray:
    model = finite_b_operator(features, d_mu, p_pi, r_pi, gamma, lam, b)
    return _solve_model(model, f"finite-period fixed point (b={b}, lambda={lam})")
# endregion


# region -----Theory Constants-----
def monotonicity_constant(a_matrix: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part: <A theta, theta> >= mu ||theta||^2."""
    a_matrix = np.atleast_2d(np.asarray(a_matrix, dtype=np.float64))
    mu = float(linalg.eigvalsh(0.5 * (a_matrix + a_matrix.T))[0])
    if mu <= 0:
        raise PositiveDefinitenessError(mu)
    return mu


def lipschitz_constant(a_matrix: np.ndarray) -> float:
    return spectral_norm(a_matrix)


def approx_error(features: FeatureMap, theta_star: np.ndarray, v_pi: np.ndarray) -> float:
    v_pi = np.asarray(v_pi, dtype=np.float64)
    if v_pi.shape != (features.n_states,):
        raise InvalidArgumentError(f"v_pi must have length {features.n_states}, got {v_pi.shape}")
    return float(np.max(np.abs(features.phi @ theta_star - v_pi)))


def theory_constants(model: OperatorModel, features: FeatureMap, theta_star: np.ndarray, v_pi: np.ndarray) -> TheoryConstants:
    mu = monotonicity_constant(model.a_matrix)
    lip = lipschitz_constant(model.a_matrix)
    return TheoryConstants(mu=mu, lip=lip, t0=8.0 * lip ** 2 / mu ** 2, eps_approx=approx_error(features, theta_star, v_pi))


def bias_constant(b_phi: float, gamma: float, chi: float, c_m: float, f: np.ndarray) -> float:
    """C_b = B_phi (1 + gamma) (C_M / |chi - gamma| + 1 + ||f||_1)."""
    if chi == gamma:
        raise InvalidArgumentError("bias constant is undefined for chi == gamma")
    return b_phi * (1.0 + gamma) * (c_m / abs(chi - gamma) + 1.0 + float(np.sum(np.abs(f))))
# endregion


# region -----Period Length Selection-----
def _ceil(x: float) -> int:
    return math.ceil(x - CEIL_SLACK)


def select_b(
        params: BSelectorParams,
        gamma: float,
        T: int,
        mu: float,
        b_phi: float,
        variant: Variant
) -> int:
    if T < 2:
        raise InvalidArgumentError(f"T must be >= 2, got {T}")
    if variant not in ("etd0", "etd_lambda"):
        raise InvalidArgumentError(f"unknown variant {variant!r}")

    log_inv_xi = -math.log(params.xi)
    if variant == "etd0":
        growth = gamma ** 2 * params.rho_max
        denominator = log_inv_xi + (math.log(growth) if growth > 1.0 else 0.0)
    else:
        denominator = log_inv_xi + max(math.log(params.rho_max), 0.0)
    variance_branch = math.log(T) / denominator

    bias_branch = 0.0
    if params.c_b is not None:
        if not mu > 0:
            raise InvalidArgumentError(f"mu must be positive, got {mu}")
        bias_branch = _ceil((math.log(mu) - math.log(5.0 * params.c_b * b_phi)) / math.log(params.xi))

    b = max(1, _ceil(max(bias_branch, variance_branch)))
    logger.debug("selected b=%d (bias branch %.3f, variance branch %.3f)", b, bias_branch, variance_branch)
    return b


def rate_exponent(gamma: float, rho_max: float, xi: float, variant: Variant) -> float:
    growth = gamma ** 2 * rho_max if variant == "etd0" else rho_max
    if growth <= 1.0:
        return 1.0
    return 1.0 / (math.log(growth) / -math.log(xi) + 1.0)


def variance_regime(gamma: float, rho_max: float, tol: float = 1e-12) -> str:
    growth = gamma ** 2 * rho_max
    if abs(growth - 1.0) <= tol:
        return "linear"
    return "bounded" if growth < 1.0 else "exponential"
# endregion
