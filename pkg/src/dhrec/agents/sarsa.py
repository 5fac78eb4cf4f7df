"""Tabular SARSA over capped exposure counts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from dhrec import env as sim
from dhrec.core.types import Action, ExposureState, Transition


def discretize(counts: Sequence[int], cap: int) -> tuple[int, ...]:
    return tuple(min(int(c), cap) for c in counts)


@dataclass
class QTable:
    n_actions: int
    count_cap: int = 5
    values: dict[tuple[tuple[int, ...], int], float] = field(default_factory=dict)

    def key(self, state: ExposureState | Sequence[int]) -> tuple[int, ...]:
        counts = state.counts if isinstance(state, ExposureState) else state
        return discretize(counts, self.count_cap)

    def get(self, state, action: int) -> float:
        return self.values.get((self.key(state), action), 0.0)

    def row(self, state) -> np.ndarray:
        k = self.key(state)
        return np.array([self.values.get((k, a), 0.0) for a in range(self.n_actions)])

    def set(self, state, action: int, value: float) -> None:
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite Q value for {self.key(state)}, {action}")
        self.values[(self.key(state), action)] = float(value)

    def greedy(self, state) -> int:
        return int(np.argmax(self.row(state)))

    def to_dict(self) -> dict:
        rows = sorted(self.values.items())
        return {
            "n_actions": self.n_actions,
            "count_cap": self.count_cap,
            "entries": [[list(s), a, v] for (s, a), v in rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QTable":
        t = cls(d["n_actions"], d["count_cap"])
        for s, a, v in d["entries"]:
            t.values[(tuple(s), int(a))] = float(v)
        return t


def sarsa_update(table: QTable, t: Transition, next_action: Optional[Action], lr: float, gamma: float) -> QTable:
    """One TD(0) on-policy step: Q(s,a) += lr * (r + gamma * Q(s',a') - Q(s,a))."""
    if not 0.0 <= lr <= 1.0:
        raise ValueError(f"lr must lie in [0, 1], got {lr}")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if lr == 0.0:
        return table
    a = t.action.content_type_index
    bootstrap = 0.0
    if not t.done:
        if next_action is None:
            raise ValueError("non-terminal transition needs the next action")
        bootstrap = table.get(t.next_state, next_action.content_type_index)
    q = table.get(t.state, a)
    table.set(t.state, a, q + lr * (t.reward + gamma * bootstrap - q))
    return table


class SarsaAgent:
    def __init__(self, n_actions: int, count_cap: int = 5, lr: float = 0.1, gamma: float = 0.7, epsilon: float = 0.1):
        self.table = QTable(n_actions, count_cap)
        self.lr = lr
        self.gamma = gamma
        self.epsilon = epsilon

    def act(self, state: ExposureState, explore: bool = False, rng: Optional[np.random.Generator] = None) -> Action:
        if explore:
            if rng is None:
                raise ValueError("exploration needs a random generator")
            u, pick = rng.random(), int(rng.integers(self.table.n_actions))
            if u < self.epsilon:
                return Action(pick)
        return Action(self.table.greedy(state))

    def learn(self, t: Transition, next_action: Optional[Action]) -> None:
        sarsa_update(self.table, t, next_action, self.lr, self.gamma)

    def scores(self, contexts, counts: np.ndarray) -> np.ndarray:
        return np.array([self.table.row(c) for c in np.asarray(counts)])


# ---------------------------------------------------------------------------
# batched exploring-starts SARSA for enumerable count MDPs


@dataclass
class ChainMdp:
    """Arrays describing one customer's count MDP under the simulator rules."""

    states: list[tuple[int, ...]]
    index: dict[tuple[int, ...], int]
    click: np.ndarray  # (S, A) click probability
    cont: np.ndarray  # (S, A) probability the visit continues after the step
    nxt: np.ndarray  # (S, A) next state index, -1 when the cap ends the visit

    @classmethod
    def build(cls, profile: sim.CustomerProfile, horizon: int) -> "ChainMdp":
        n = len(profile.base_utility)
        states = sorted(sim.count_states(n, horizon - 1))
        index = {s: i for i, s in enumerate(states)}
        click = np.zeros((len(states), n))
        cont = np.zeros((len(states), n))
        nxt = np.full((len(states), n), -1, dtype=np.int64)
        stay = 1.0 - sim.departure_probability(profile.patience)
        for i, s in enumerate(states):
            click[i] = sim.click_probabilities(profile, s)
            for a in range(n):
                ns = list(s)
                ns[a] += 1
                if sum(ns) < horizon:
                    nxt[i, a] = index[tuple(ns)]
                    cont[i, a] = stay
        return cls(states, index, click, cont, nxt)


def sarsa_exploring_starts(
    mdp: ChainMdp,
    gamma: float,
    rng: np.random.Generator,
    iterations: int = 400,
    batch: int = 50_000,
    epsilon0: float = 0.2,
) -> np.ndarray:
    """SARSA with exploring starts, run on ``batch`` episodes in lock-step.

    Every episode starts from a uniformly drawn (state, action) pair and then
    follows an epsilon-greedy policy whose epsilon decays as
    ``epsilon0 / (1 + iteration)``.  TD errors of one lock-step are summed per
    (state, action) and applied with step size ``w / W`` where samples of
    iteration ``t`` carry weight ``w = t + 1`` and ``W`` is the accumulated
    weight.  Each entry is then a linearly weighted running average of its
    SARSA targets, so the stale targets of early iterations fade as 1/t**2.
    """
    S, A = mdp.click.shape
    q = np.zeros((S, A))
    visits = np.zeros((S, A))
    for it in range(iterations):
        eps = epsilon0 / (1.0 + it)
        w = float(it + 1)
        s = rng.integers(0, S, size=batch)
        a = rng.integers(0, A, size=batch)
        while s.size:
            r = (rng.random(s.size) < mdp.click[s, a]).astype(float)
            alive = (mdp.nxt[s, a] >= 0) & (rng.random(s.size) < mdp.cont[s, a])
            s2 = np.where(alive, mdp.nxt[s, a], 0)
            greedy = np.argmax(q[s2], axis=1)
            explore = rng.random(s.size) < eps
            a2 = np.where(explore, rng.integers(0, A, size=s.size), greedy)
            target = r + gamma * np.where(alive, q[s2, a2], 0.0)
            flat = s * A + a
            td = np.bincount(flat, weights=target - q[s, a], minlength=S * A).reshape(S, A)
            n = np.bincount(flat, minlength=S * A).reshape(S, A)
            visits += w * n
            hit = n > 0
            q[hit] += w * td[hit] / visits[hit]
            s, a = s2[alive], a2[alive]
    return q
