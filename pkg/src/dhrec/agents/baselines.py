"""Reference scorers used for sanity bounds: uniform noise and a profile-reading oracle."""

from __future__ import annotations

import re
from typing import Sequence

import numpy as np

from dhrec import env as sim
from dhrec.core import rng as streams
from dhrec.core.types import Context

_USER_ID = re.compile(r"^u(\d+)-(\d+)$")


class RandomAgent:
    """Scores are i.i.d. uniform, so rankings are uniformly random permutations."""

    def __init__(self, n_types: int, seed: int):
        self.n_types = n_types
        self.rng = streams.substream(seed, streams.EVAL, 0)

    def scores(self, contexts: Sequence[Context], counts=None) -> np.ndarray:
        return self.rng.random((len(contexts), self.n_types))


class OracleAgent:
    """Ranks by the true click probability of the hidden profile.

    Test-only: it rebuilds each customer's profile from the simulator seed and
    the session key embedded in the user id.
    """

    def __init__(self, pop: sim.PopulationParams, seed: int):
        self.pop = pop
        self.seed = seed
        self._profiles: dict[str, sim.CustomerProfile] = {}

    def profile(self, context: Context) -> sim.CustomerProfile:
        p = self._profiles.get(context.user_id)
        if p is None:
            m = _USER_ID.match(context.user_id)
            if m is None:
                raise ValueError(f"cannot recover a session key from user id {context.user_id!r}")
            namespace, session_id = int(m.group(1)), int(m.group(2))
            p = sim.open_session(self.pop, self.seed, session_id, namespace).profile
            self._profiles[context.user_id] = p
        return p

    def scores(self, contexts: Sequence[Context], counts) -> np.ndarray:
        counts = np.asarray(counts)
        return np.array([sim.click_probabilities(self.profile(c), n) for c, n in zip(contexts, counts)])
