# region -----External Imports-----
from dataclasses import dataclass, field
from typing import Literal, Optional, Tuple

import numpy as np
from scipy import linalg
# endregion

# region -----Internal Imports-----
from .exceptions import InvalidArgumentError, RankDeficiencyError
# endregion

# region -----Supporting Variables-----
PROBABILITY_TOL = 1e-12
RANK_TOL = 1e-10

ALGORITHMS: Tuple[str, ...] = ("td0", "etd0", "etd-lambda", "per-etd0", "per-etd-lambda")
PERIODIC_ALGORITHMS: Tuple[str, ...] = ("per-etd0", "per-etd-lambda")


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    if array.ndim != ndim:
        raise InvalidArgumentError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    array.setflags(write=False)
    return array


def _check_simplex_rows(rows: np.ndarray, name: str) -> None:
    if np.any(rows < 0):
        raise InvalidArgumentError(f"{name} has negative probabilities")
    sums = rows.sum(axis=-1)
    worst = float(np.max(np.abs(sums - 1.0)))
    if worst > PROBABILITY_TOL:
        raise InvalidArgumentError(f"{name} rows must sum to 1 (max deviation {worst:.3g})")
# endregion


# region -----MDP Models-----
@dataclass(frozen=True)
class FiniteMdp:
    transition: np.ndarray
    reward: np.ndarray
    gamma: float

    def __post_init__(self):
        transition = _frozen_array(self.transition, 3, "transition")
        reward = _frozen_array(self.reward, 2, "reward")
        n_states, n_actions, n_next = transition.shape
        if n_states == 0 or n_actions == 0 or n_next != n_states:
            raise InvalidArgumentError(f"transition must have shape (S, A, S), got {transition.shape}")
        if reward.shape != (n_states, n_actions):
            raise InvalidArgumentError(f"reward must have shape {(n_states, n_actions)}, got {reward.shape}")
        _check_simplex_rows(transition, "transition")
        if not 0.0 < self.gamma < 1.0:
            raise InvalidArgumentError(f"gamma must lie in (0, 1), got {self.gamma}")
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.reward)))


@dataclass(frozen=True)
class Policy:
    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen_array(self.probs, 2, "policy")
        _check_simplex_rows(probs, "policy")
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class InducedChain:
    p_pi: np.ndarray
    r_pi: np.ndarray

    def __post_init__(self):
        p_pi = _frozen_array(self.p_pi, 2, "p_pi")
        r_pi = _frozen_array(self.r_pi, 1, "r_pi")
        if p_pi.shape != (r_pi.shape[0], r_pi.shape[0]):
            raise InvalidArgumentError(f"p_pi shape {p_pi.shape} does not match r_pi length {r_pi.shape[0]}")
        _check_simplex_rows(p_pi, "p_pi")
        object.__setattr__(self, "p_pi", p_pi)
        object.__setattr__(self, "r_pi", r_pi)


@dataclass(frozen=True)
class Transition:
    s: int
    a: int
    r: float
    s_next: int
    rho: float
# endregion


# region -----Feature Models-----
@dataclass(frozen=True)
class FeatureMap:
    phi: np.ndarray
    b_phi: float = field(init=False)

    def __post_init__(self):
        phi = _frozen_array(self.phi, 2, "phi")
        n_states, d = phi.shape
        if d == 0 or n_states < d:
            raise RankDeficiencyError(f"phi of shape {phi.shape} cannot have {d} independent columns")
        singular = linalg.svdvals(phi)
        rank = int(np.sum(singular > RANK_TOL * singular[0])) if singular[0] > 0 else 0
        if rank < d:
            raise RankDeficiencyError(f"phi has rank {rank} < d = {d}")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "b_phi", float(np.max(np.linalg.norm(phi, axis=1))))

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @property
    def d(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class ProjectionBall:
    radius: Optional[float] = None

    def __post_init__(self):
        if self.radius is not None and not self.radius > 0:
            raise InvalidArgumentError(f"projection radius must be positive, got {self.radius}")

    @classmethod
    def disabled(cls) -> "ProjectionBall":
        return cls(None)

    @property
    def enabled(self) -> bool:
        return self.radius is not None
# endregion


# region -----Learner Models-----
@dataclass
class TraceState:
    f: float
    m: float
    e: Optional[np.ndarray] = None


@dataclass(frozen=True)
class StepsizeSchedule:
    kind: Literal["constant", "diminishing"]
    value: float = 0.0
    mu: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        if self.kind == "constant":
            if not self.value > 0:
                raise InvalidArgumentError(f"constant stepsize must be positive, got {self.value}")
        elif self.kind == "diminishing":
            if not (self.mu > 0 and self.t0 > 0):
                raise InvalidArgumentError(f"diminishing stepsize needs mu > 0 and t0 > 0, got mu={self.mu}, t0={self.t0}")
        else:
            raise InvalidArgumentError(f"unknown stepsize kind {self.kind!r}")

    @classmethod
    def constant(cls, eta: float) -> "StepsizeSchedule":
        return cls("constant", value=eta)

    @classmethod
    def diminishing(cls, mu: float, t0: float) -> "StepsizeSchedule":
        return cls("diminishing", mu=mu, t0=t0)


@dataclass
class LearnerState:
    """Mutable, single-owner. Step functions update it in place and return it."""

    theta: np.ndarray
    algo: str
    t: int = 0
    b: int = 0
    lam: float = 0.0
    trace: Optional[TraceState] = None
    prev_rho: float = 0.0
    transitions: int = 0
    diverged: bool = False


@dataclass(frozen=True)
class SampleWindow:
    transitions: Tuple[Transition, ...]

    def __post_init__(self):
        items = tuple(self.transitions)
        for current, following in zip(items, items[1:]):
            if current.s_next != following.s:
                raise InvalidArgumentError(
                    f"window does not chain: s_next={current.s_next} followed by s={following.s}"
                )
        object.__setattr__(self, "transitions", items)

    @property
    def b(self) -> int:
        return len(self.transitions) - 1
# endregion


# region -----Fixed Point Models-----
@dataclass(frozen=True)
class EmphaticWeights:
    f: np.ndarray
    m: np.ndarray
    lam: float


@dataclass(frozen=True)
class OperatorModel:
    a_matrix: np.ndarray
    c_vector: np.ndarray


@dataclass(frozen=True)
class TheoryConstants:
    mu: float
    lip: float
    t0: float
    eps_approx: float


@dataclass(frozen=True)
class BSelectorParams:
    xi: float
    rho_max: float
    c_b: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.xi < 1.0:
            raise InvalidArgumentError(f"xi must lie in (0, 1), got {self.xi}")
        if self.c_b is not None and not self.c_b > 0:
            raise InvalidArgumentError(f"c_b must be positive, got {self.c_b}")
        if not self.rho_max > 0:
            raise InvalidArgumentError(f"rho_max must be positive, got {self.rho_max}")

    @classmethod
    def from_chi(cls, gamma: float, chi: float, rho_max: float, c_b: Optional[float] = None) -> "BSelectorParams":
        if not 0.0 < chi < 1.0:
            raise InvalidArgumentError(f"chi must lie in (0, 1), got {chi}")
        return cls(xi=max(gamma, chi), rho_max=rho_max, c_b=c_b)
# endregion


# region -----Training Models-----
@dataclass(frozen=True)
class AlgoConfig:
    algo: str
    b: int = 1
    lam: float = 0.0

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise InvalidArgumentError(f"unknown algorithm {self.algo!r}; expected one of {list(ALGORITHMS)}")
        if self.algo in PERIODIC_ALGORITHMS and self.b < 1:
            raise InvalidArgumentError(f"period length b must be >= 1, got {self.b}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidArgumentError(f"lambda must lie in [0, 1], got {self.lam}")

    @property
    def periodic(self) -> bool:
        return self.algo in PERIODIC_ALGORITHMS


@dataclass(frozen=True)
class TrainingTrace:
    iterations: Tuple[int, ...]
    transitions: Tuple[int, ...]
    thetas: np.ndarray
    diverged: bool = False
# endregion
