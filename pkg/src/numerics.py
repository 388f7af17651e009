# region -----External Imports-----
import logging

import numpy as np
from scipy import linalg
# endregion

# region -----Internal Imports-----
from .exceptions import NumericalError
# endregion

# region -----Supporting Variables-----
logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
# endregion


def condition_number(matrix: np.ndarray) -> float:
    return float(np.linalg.cond(matrix))


def solve_checked(matrix: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Pivoted LU solve that refuses singular or badly conditioned systems."""
    matrix = np.asarray(matrix, dtype=np.float64)
    condition = condition_number(matrix)
    logger.debug("solving %s: condition number %.3g", what, condition)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise NumericalError(f"{what}: system is singular or ill-conditioned (condition {condition:.3g})", condition)
    try:
        with np.errstate(all="raise"):
            lu_piv = linalg.lu_factor(matrix, check_finite=True)
            return linalg.lu_solve(lu_piv, rhs)
    except (linalg.LinAlgError, FloatingPointError) as e:
        raise NumericalError(f"{what}: {e}", condition)


def spectral_norm(matrix: np.ndarray) -> float:
    return float(linalg.svdvals(np.atleast_2d(matrix))[0])
