# region -----External Imports-----
import logging
from bisect import bisect_right
from typing import List, Optional

import numpy as np
# endregion

# region -----Internal Imports-----
from .exceptions import CoverageError, InvalidArgumentError
from .mdp import importance_ratios, induced_chain, stationary_distribution
from .models import FiniteMdp, Policy, SampleWindow, Transition
# endregion

# region -----Supporting Variables-----
logger = logging.getLogger(__name__)

UNIFORM_BLOCK = 4096


def _cdf_table(rows: np.ndarray) -> List[List[float]]:
    return [np.cumsum(row).tolist() for row in rows]


def _draw(cdf: List[float], probs: np.ndarray, u: float) -> int:
    index = bisect_right(cdf, u)
    if index >= len(cdf):
        # float round-off left cdf[-1] slightly below 1
        index = int(np.flatnonzero(probs > 0)[-1])
    return index
# endregion


class TrajectorySampler:
    """One continuous behavior-policy trajectory.

    Every transition consumes exactly two uniforms from a PCG64 stream, so a
    seed plus a call sequence fixes the transitions bit for bit regardless of
    how they are grouped into windows.
    """

    def __init__(
            self,
            mdp: FiniteMdp,
            target: Policy,
            behavior: Policy,
            seed: int,
            start_state: Optional[int] = None
    ):
        if behavior.probs.shape != (mdp.n_states, mdp.n_actions):
            raise InvalidArgumentError(
                f"behavior shape {behavior.probs.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})"
            )
        self.mdp = mdp
        self.target = target
        self.behavior = behavior
        self.seed = seed
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.transitions_drawn = 0

        self._ratios = importance_ratios(target, behavior).tolist()
        self._rewards = mdp.reward.tolist()
        self._action_cdf = _cdf_table(behavior.probs)
        self._next_cdf = [_cdf_table(mdp.transition[s]) for s in range(mdp.n_states)]
        self._buffer: List[float] = []
        self._cursor = 0

        if start_state is None:
            d_mu = stationary_distribution(induced_chain(mdp, behavior).p_pi)
            self.current_state = _draw(np.cumsum(d_mu).tolist(), d_mu, self._uniform())
        else:
            if not 0 <= start_state < mdp.n_states:
                raise InvalidArgumentError(f"start state {start_state} outside [0, {mdp.n_states})")
            self.current_state = int(start_state)
        logger.debug("sampler seeded with %d, start state %d", seed, self.current_state)

    def _uniform(self) -> float:
        if self._cursor >= len(self._buffer):
            self._buffer = self.rng.random(UNIFORM_BLOCK).tolist()
            self._cursor = 0
        u = self._buffer[self._cursor]
        self._cursor += 1
        return u

    def sample(self) -> Transition:
        s = self.current_state
        a = _draw(self._action_cdf[s], self.behavior.probs[s], self._uniform())
        if self.behavior.probs[s, a] <= 0:
            raise CoverageError(s, a)
        s_next = _draw(self._next_cdf[s][a], self.mdp.transition[s, a], self._uniform())
        self.current_state = s_next
        self.transitions_drawn += 1
        return Transition(s=s, a=a, r=self._rewards[s][a], s_next=s_next, rho=self._ratios[s][a])


def sample_transition(sampler: TrajectorySampler) -> Transition:
    return sampler.sample()


def sample_window(sampler: TrajectorySampler, b: int) -> SampleWindow:
    """b+1 consecutive transitions; the last s_next is the next window's first state."""
    return SampleWindow(tuple(sampler.sample() for _ in range(b + 1)))
