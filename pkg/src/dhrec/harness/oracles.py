"""Enumerable-MDP checks behind the ``oracle`` command."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dhrec import env as sim
from dhrec.agents.sarsa import ChainMdp, sarsa_exploring_starts
from dhrec.agents.slateq import select_slate, slate_value
from dhrec.core import rng as streams
from dhrec.core.types import Context, ContentItem, ExposureState


def chain_profile() -> sim.CustomerProfile:
    """Two content types, two rounds: three decision states."""
    return sim.CustomerProfile(
        base_utility=np.array([1.5, 0.0]), satiation_rate=0.6, patience=math.inf, null_utility=0.0,
    )


CHAIN_HORIZON = 2
CHAIN_GAMMA = 0.9


@dataclass
class SarsaOracleResult:
    max_error: float
    policy_match: bool
    n_states: int


def sarsa_oracle(seed: int, iterations: int = 400, batch: int = 50_000) -> SarsaOracleResult:
    profile = chain_profile()
    mdp = ChainMdp.build(profile, CHAIN_HORIZON)
    q = sarsa_exploring_starts(mdp, CHAIN_GAMMA, streams.substream(seed, streams.LEARNER), iterations, batch)
    star = sim.ground_truth_q(profile, CHAIN_GAMMA, CHAIN_HORIZON)
    ref = np.array([star[s] for s in mdp.states])
    match = all(int(np.argmax(q[i])) == int(np.argmax(ref[i])) for i in range(len(mdp.states)))
    return SarsaOracleResult(float(np.abs(q - ref).max()), match, len(mdp.states))


def slate_profile() -> sim.CustomerProfile:
    """Three items, one per type; two slate rounds give four decision states."""
    return sim.CustomerProfile(
        base_utility=np.array([0.8, 0.2, -0.4]), satiation_rate=0.7, patience=math.inf, null_utility=0.5,
        conversion_prob=0.0,
    )


SLATE_HORIZON = 2
SLATE_GAMMA = 0.9
SLATE_K = 2


def greedy_slate_policy(items, truth, model) -> dict[tuple[int, ...], tuple[ContentItem, ...]]:
    qbar = lambda c, it: float(truth.item_values(tuple(c))[items.index(it)])
    return {s: select_slate(s, items, SLATE_K, qbar, model) for s in truth.states}


def rollout_return(profile, policy, first_slate, gamma, horizon, g) -> float:
    """Discounted clicks of one visit: ``first_slate``, then the slates ``policy`` maps each state to."""
    n = len(profile.base_utility)
    session = sim.SessionHandle(
        session_id=0, context=Context("mc", "mc"), profile=profile, state=ExposureState.zeros(n),
        session_cap=horizon, env_rng=g,
    )
    total, disc, slate = 0.0, 1.0, first_slate
    while session.alive:
        o = sim.slate_step(session, slate)
        total += disc * o.reward
        disc *= gamma
        if session.alive:
            slate = policy[session.state.counts]
    return total


@dataclass
class SlateOracleResult:
    slate: tuple[str, ...]
    decomposed: float
    monte_carlo: float
    std_error: float

    @property
    def error(self) -> float:
        return abs(self.decomposed - self.monte_carlo)


def slate_decomposition_oracle(seed: int, rollouts: int = 100_000) -> list[SlateOracleResult]:
    """Decomposed slate value at the start state against Monte-Carlo returns, for every k-slate."""
    profile = slate_profile()
    items = list(sim.type_catalog(3))
    model = sim.SlateChoiceModel.for_profile(profile)
    # item values of the greedy-slate policy (the exact optimum)
    truth = sim.ground_truth_slate_q(profile, items, SLATE_K, SLATE_GAMMA, SLATE_HORIZON)
    s0 = (0, 0, 0)
    qbar = lambda c, it: float(truth.item_values(tuple(c))[items.index(it)])
    policy = greedy_slate_policy(items, truth, model)
    out = []
    for j, combo in enumerate(itertools.combinations(items, SLATE_K)):
        g = streams.substream(seed, streams.EVAL, j)
        returns = np.array([
            rollout_return(profile, policy, combo, SLATE_GAMMA, SLATE_HORIZON, g) for _ in range(rollouts)
        ])
        out.append(
            SlateOracleResult(
                tuple(it.content_id for it in combo),
                slate_value(s0, combo, qbar, model),
                float(returns.mean()),
                float(returns.std(ddof=1) / math.sqrt(rollouts)),
            )
        )
    return out


def brute_force_slate(counts, items: Sequence[ContentItem], k: int, qbar, model) -> tuple[ContentItem, ...]:
    best, best_val = None, -math.inf
    for combo in itertools.combinations(sorted(items, key=lambda it: it.content_id), k):
        probs, _ = model.probabilities(counts, combo)
        v = sum(p * qbar(counts, it) for p, it in zip(probs, combo))
        if v > best_val:
            best, best_val = combo, v
    return tuple(best)


def random_slate_instance(g: np.random.Generator, n_items: int, n_types: int):
    types = sim.content_types(n_types)
    items = [ContentItem(f"c{j:02d}", types[int(g.integers(n_types))]) for j in range(n_items)]
    profile = sim.CustomerProfile(
        base_utility=g.normal(0, 1, n_types), satiation_rate=float(g.uniform(0, 1)),
        patience=math.inf, null_utility=float(g.normal()),
    )
    table = {it.content_id: float(g.uniform(0, 2)) for it in items}
    counts = tuple(int(c) for c in g.integers(0, 3, n_types))
    return items, sim.SlateChoiceModel.for_profile(profile), (lambda c, it: table[it.content_id]), counts


def selection_oracle(seed: int, instances: int = 50) -> tuple[int, int]:
    """How many random instances exhaustive select_slate gets identical to brute force."""
    g = streams.substream(seed, streams.EVAL, 999)
    agree = 0
    for _ in range(instances):
        n_items = int(g.integers(3, 9))
        k = int(g.integers(1, n_items + 1))
        items, model, qbar, counts = random_slate_instance(g, n_items, 4)
        got = select_slate(counts, items, k, qbar, model, "exhaustive")
        agree += got == brute_force_slate(counts, items, k, qbar, model)
    return agree, instances
