# region -----External Imports-----
import logging

import numpy as np
from scipy import linalg
# endregion

# region -----Internal Imports-----
from .exceptions import InvalidArgumentError, RankDeficiencyError
from .models import FeatureMap, ProjectionBall
from .numerics import MAX_CONDITION, condition_number, spectral_norm
# endregion

# region -----Supporting Variables-----
logger = logging.getLogger(__name__)

PHI1 = np.array([[0.35], [0.35], [0.35], [0.35], [0.35], [0.35], [0.37]])

PHI2 = np.array([
    [0.3425, 0.0171],
    [0.1902, 0.4248],
    [0.1354, 0.76],
    [0.1357, 0.7973],
    [0.8674, 0.8774],
    [0.5166, 0.9493],
    [0.3094, 0.8535],
])

PHI3 = np.array([
    [0.5162, 0.9013],
    [0.5128, 0.5999],
    [0.289, 0.4649],
    [0.3399, 0.5334],
    [0.315, 0.2278],
    [0.667, 0.461],
    [0.3706, 0.1457],
])

FEATURE_PRESETS = {"phi1": PHI1, "phi2": PHI2, "phi3": PHI3}
# endregion


# region -----Construction-----
def feature_preset(name: str) -> FeatureMap:
    if name not in FEATURE_PRESETS:
        raise InvalidArgumentError(f"unknown feature preset {name!r}; expected one of {sorted(FEATURE_PRESETS)}")
    return FeatureMap(FEATURE_PRESETS[name])


def tabular_features(n_states: int) -> FeatureMap:
    return FeatureMap(np.eye(n_states))
# endregion


# region -----Linear Value Functions-----
def value_estimate(features: FeatureMap, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (features.d,):
        raise InvalidArgumentError(f"theta must have shape ({features.d},), got {theta.shape}")
    return features.phi @ theta


def project_ball(theta: np.ndarray, ball: ProjectionBall) -> np.ndarray:
    if not ball.enabled:
        return theta
    norm = float(np.linalg.norm(theta))
    if norm <= ball.radius:
        return theta
    return theta * (ball.radius / norm)


def weighted_projection(v: np.ndarray, features: FeatureMap, weights: np.ndarray) -> np.ndarray:
    """Coefficients of the weights-weighted least-squares fit of v in span(phi)."""
    v = np.asarray(v, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if v.shape != (features.n_states,) or weights.shape != (features.n_states,):
        raise InvalidArgumentError(
            f"v and weights must have length {features.n_states}, got {v.shape} and {weights.shape}"
        )
    if np.any(weights < 0):
        raise InvalidArgumentError("projection weights must be nonnegative")

    weighted_phi = features.phi * weights[:, None]
    gram = features.phi.T @ weighted_phi
    condition = condition_number(gram)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise RankDeficiencyError(f"weighted Gram matrix is singular (condition {condition:.3g})")
    try:
        return linalg.solve(gram, weighted_phi.T @ v, assume_a="pos")
    except linalg.LinAlgError as e:
        raise RankDeficiencyError(f"weighted Gram matrix is not positive definite: {e}")


def default_radius(features: FeatureMap, r_max: float, gamma: float, mu: float) -> float:
    """Radius ||Phi^T||_2 r_max / ((1 - gamma) mu); contains the fixed point."""
    if not mu > 0:
        raise InvalidArgumentError(f"mu must be positive, got {mu}")
    return spectral_norm(features.phi.T) * r_max / ((1.0 - gamma) * mu)
# endregion
