"""Simulated virtual live-broadcast room.

Each session is one customer with a hidden :class:`CustomerProfile`.  The
agent exposes one content type per round; the customer clicks with
probability ``logistic(base_utility[a] - satiation_rate * counts[a] -
null_utility)``, and leaves after each round with probability
``1 / patience`` or when the session-length cap is hit.  A click converts
into a deal with probability ``conversion_prob``; deals are logged but do
not change the reward.

Slate rounds use the same utilities inside a multinomial logit with a
no-click option.  A no-click on a slate ends the session, which keeps the
value of the null choice at exactly zero.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from scipy.special import expit

from dhrec.core import rng as streams
from dhrec.core.config import ExperimentConfig
from dhrec.core.types import (
    Action,
    ContentItem,
    Context,
    ExposureState,
    Transition,
    content_types,
    increment_exposure,
)


class SessionClosedError(RuntimeError):
    pass


class EnumerationLimitError(RuntimeError):
    pass


@dataclass(frozen=True)
class PopulationParams:
    n_types: int = 8
    type_utility: tuple[float, ...] = ()
    n_segments: int = 4
    segment_std: float = 1.5
    user_std: float = 0.5
    null_utility: float = 1.0
    satiation_mean: float = 0.8
    satiation_std: float = 0.2
    patience: float = 12.0
    patience_jitter: float = 0.25
    conversion_prob: float = 0.2
    session_cap: int = 20
    seed: int = 0

    @classmethod
    def from_config(cls, cfg: ExperimentConfig, seed: Optional[int] = None) -> "PopulationParams":
        return cls(
            n_types=cfg.n_types,
            type_utility=cfg.utilities,
            n_segments=cfg.n_segments,
            segment_std=cfg.segment_std,
            user_std=cfg.user_std,
            null_utility=cfg.null_utility,
            satiation_mean=cfg.satiation_mean,
            satiation_std=cfg.satiation_std,
            patience=cfg.patience,
            patience_jitter=cfg.patience_jitter,
            conversion_prob=cfg.conversion_prob,
            session_cap=cfg.session_cap,
            seed=cfg.seed if seed is None else seed,
        )

    @property
    def mean_utility(self) -> np.ndarray:
        if self.type_utility:
            return np.asarray(self.type_utility, dtype=float)
        return np.zeros(self.n_types)

    def segment_offsets(self) -> np.ndarray:
        """Per-store preference offsets, centred so they average to zero."""
        return _segment_offsets(self.seed, self.n_segments, self.n_types, self.segment_std).copy()


@functools.lru_cache(maxsize=64)
def _segment_offsets(seed: int, n_segments: int, n_types: int, std: float) -> np.ndarray:
    if std == 0.0 or n_segments == 1:
        return np.zeros((n_segments, n_types))
    g = streams.substream(seed, streams.POPULATION)
    raw = g.normal(0.0, std, size=(n_segments, n_types))
    return raw - raw.mean(axis=0, keepdims=True)


@dataclass
class CustomerProfile:
    base_utility: np.ndarray
    satiation_rate: float
    patience: float
    null_utility: float
    conversion_prob: float = 0.0
    segment: int = 0


def sample_profile(pop: PopulationParams, g: np.random.Generator) -> CustomerProfile:
    segment = int(g.integers(pop.n_segments))
    noise = g.standard_normal(pop.n_types)
    sat = g.standard_normal()
    jitter = g.random()
    base = pop.mean_utility + _segment_offsets(pop.seed, pop.n_segments, pop.n_types, pop.segment_std)[segment]
    if pop.user_std > 0:
        base = base + pop.user_std * noise
    patience = pop.patience
    if math.isfinite(patience) and pop.patience_jitter > 0:
        patience *= 1.0 + pop.patience_jitter * (2.0 * jitter - 1.0)
    return CustomerProfile(
        base_utility=base,
        satiation_rate=max(0.0, pop.satiation_mean + pop.satiation_std * sat),
        patience=patience,
        null_utility=pop.null_utility,
        conversion_prob=pop.conversion_prob,
        segment=segment,
    )


def click_probabilities(profile: CustomerProfile, counts: Sequence[int]) -> np.ndarray:
    """Click probability of every content type in the given exposure state."""
    c = np.asarray(counts, dtype=float)
    with np.errstate(invalid="ignore"):
        logits = profile.base_utility - profile.satiation_rate * c - profile.null_utility
    return expit(logits)


def p_click(profile: CustomerProfile, counts: Sequence[int], action: int) -> float:
    return float(click_probabilities(profile, counts)[action])


def departure_probability(patience: float) -> float:
    return 0.0 if math.isinf(patience) else min(1.0, 1.0 / patience)


@dataclass
class SessionHandle:
    """One customer visit.  ``profile`` is ground truth and hidden from agents."""

    session_id: int
    context: Context
    profile: CustomerProfile
    state: ExposureState
    session_cap: int
    start_time: int = 0
    steps: int = 0
    alive: bool = True
    env_rng: np.random.Generator = field(default=None, repr=False)
    policy_rng: np.random.Generator = field(default=None, repr=False)
    log: list[Transition] = field(default_factory=list, repr=False)


def open_session(
    pop: PopulationParams,
    seed: int,
    session_id: int = 0,
    namespace: int = streams.DATASET_SESSIONS,
    start_time: int = 0,
) -> SessionHandle:
    profile = sample_profile(pop, streams.substream(seed, namespace, session_id, streams.PROFILE))
    return SessionHandle(
        session_id=session_id,
        context=Context(user_id=f"u{namespace}-{session_id}", store_id=f"store-{profile.segment}"),
        profile=profile,
        state=ExposureState.zeros(pop.n_types),
        session_cap=pop.session_cap,
        start_time=start_time,
        env_rng=streams.substream(seed, namespace, session_id, streams.ENV),
        policy_rng=streams.substream(seed, namespace, session_id, streams.POLICY),
    )


def step(session: SessionHandle, action: Action) -> tuple[Transition, SessionHandle]:
    """Advance the session by one exposure round."""
    if not session.alive:
        raise SessionClosedError(f"session {session.session_id} has already ended")
    next_state = increment_exposure(session.state, action)
    p = p_click(session.profile, session.state.counts, action.content_type_index)
    g = session.env_rng
    # fixed draw order: click, deal, departure
    u_click, u_deal, u_leave = g.random(3)
    clicked = bool(u_click < p)
    deal = clicked and bool(u_deal < session.profile.conversion_prob)
    steps = session.steps + 1
    done = steps >= session.session_cap or bool(
        u_leave < departure_probability(session.profile.patience)
    )
    t = Transition(
        context=session.context,
        state=session.state,
        action=action,
        reward=1.0 if clicked else 0.0,
        next_state=next_state,
        done=done,
        timestamp=session.start_time + session.steps,
        session_id=session.session_id,
        step=session.steps,
        deal=deal,
    )
    session.log.append(t)
    session.state = next_state
    session.steps = steps
    session.alive = not done
    return t, session


class SlateChoiceModel:
    """Multinomial logit over a slate plus a no-click option."""

    def __init__(self, utility: Callable[[Sequence[int], ContentItem], float], null_utility: float):
        self.utility = utility
        self.null_utility = null_utility

    @classmethod
    def for_profile(cls, profile: CustomerProfile) -> "SlateChoiceModel":
        def u(counts, item):
            a = item.content_type.index
            return profile.base_utility[a] - profile.satiation_rate * counts[a]

        return cls(u, profile.null_utility)

    def probabilities(self, counts: Sequence[int], slate: Sequence[ContentItem]) -> tuple[np.ndarray, float]:
        """Return (P(item | state, slate) for each item, P(no click))."""
        check_slate(slate)
        utils = np.array([self.utility(counts, item) for item in slate], dtype=float)
        return mnl_probabilities(utils, self.null_utility)


def mnl_probabilities(utils: np.ndarray, null_utility: float) -> tuple[np.ndarray, float]:
    allu = np.append(np.asarray(utils, dtype=float), null_utility)
    top = np.max(allu)
    if np.isneginf(top):
        raise ValueError("all choice utilities are -inf, including the null option")
    if np.isposinf(top):
        w = np.where(np.isposinf(allu), 1.0, 0.0)
    else:
        w = np.exp(allu - top)
    w /= w.sum()
    return w[:-1], float(w[-1])


def check_slate(slate: Sequence[ContentItem]) -> None:
    if len(slate) == 0:
        raise ValueError("slate must not be empty")
    ids = [item.content_id for item in slate]
    if len(set(ids)) != len(ids):
        raise ValueError(f"slate contains duplicate items: {ids}")


def _pick(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index chosen by each uniform in ``u``; ``len(probs)`` stands for no click."""
    return np.searchsorted(np.cumsum(probs), u, side="right")


def slate_choice(session: SessionHandle, slate: Sequence[ContentItem]) -> Optional[ContentItem]:
    """Sample the customer's pick from ``slate``; None means no click."""
    probs, _ = SlateChoiceModel.for_profile(session.profile).probabilities(session.state.counts, slate)
    k = int(_pick(probs, session.env_rng.random()))
    return slate[k] if k < len(slate) else None


def slate_choices(session: SessionHandle, slate: Sequence[ContentItem], n: int) -> np.ndarray:
    """``n`` independent picks in the current state as slate positions (``len(slate)`` = no click).

    Consumes the session stream exactly like ``n`` calls to :func:`slate_choice`.
    """
    probs, _ = SlateChoiceModel.for_profile(session.profile).probabilities(session.state.counts, slate)
    return _pick(probs, session.env_rng.random(n))


@dataclass(frozen=True)
class SlateOutcome:
    state: ExposureState
    slate: tuple[ContentItem, ...]
    chosen: Optional[ContentItem]
    reward: float
    deal: bool
    next_state: ExposureState
    done: bool


def slate_step(session: SessionHandle, slate: Sequence[ContentItem]) -> SlateOutcome:
    """One slate round: the clicked item's type is consumed; no click ends the visit."""
    if not session.alive:
        raise SessionClosedError(f"session {session.session_id} has already ended")
    chosen = slate_choice(session, slate)
    u_deal, u_leave = session.env_rng.random(2)
    state = session.state
    session.steps += 1
    if chosen is None:
        session.alive = False
        return SlateOutcome(state, tuple(slate), None, 0.0, False, state, True)
    next_state = increment_exposure(state, Action(chosen.content_type.index))
    deal = bool(u_deal < session.profile.conversion_prob)
    done = session.steps >= session.session_cap or bool(
        u_leave < departure_probability(session.profile.patience)
    )
    session.state = next_state
    session.alive = not done
    return SlateOutcome(state, tuple(slate), chosen, 1.0, deal, next_state, done)


def type_catalog(n_types: int) -> tuple[ContentItem, ...]:
    """One content item per type; the catalog used for slate decisions."""
    return tuple(ContentItem(f"item-{t.index}", t) for t in content_types(n_types))


# ---------------------------------------------------------------------------
# exact dynamic programming over the count-truncated MDP


def count_states(n_types: int, max_total: int) -> Iterator[tuple[int, ...]]:
    """All count vectors with component sum <= max_total."""
    for combo in itertools.product(range(max_total + 1), repeat=n_types):
        if sum(combo) <= max_total:
            yield combo


def n_count_states(n_types: int, max_total: int) -> int:
    return math.comb(max_total + n_types, n_types)


@dataclass
class TabularQ:
    """Q-values for every non-terminal state of the truncated MDP."""

    states: list[tuple[int, ...]]
    q: np.ndarray
    index: dict[tuple[int, ...], int]

    def __getitem__(self, state: tuple[int, ...]) -> np.ndarray:
        return self.q[self.index[tuple(state)]]

    def greedy(self) -> dict[tuple[int, ...], int]:
        return {s: int(np.argmax(self.q[i])) for i, s in enumerate(self.states)}


def _continuation(profile: CustomerProfile, total_after: int, horizon: int) -> float:
    if total_after >= horizon:
        return 0.0
    return 1.0 - departure_probability(profile.patience)


def ground_truth_q(
    profile: CustomerProfile,
    gamma: float,
    horizon: int,
    enumeration_limit: int = 200_000,
) -> TabularQ:
    """Optimal Q for a customer whose visit lasts at most ``horizon`` rounds.

    States are count vectors with total < horizon (the session cap makes any
    state with total == horizon terminal).
    """
    n = len(profile.base_utility)
    if horizon <= 0:
        s0 = (0,) * n
        return TabularQ([s0], np.zeros((1, n)), {s0: 0})
    size = n_count_states(n, horizon - 1)
    if size > enumeration_limit:
        raise EnumerationLimitError(
            f"{size} states exceed the enumeration limit of {enumeration_limit}"
        )
    states = sorted(count_states(n, horizon - 1), key=lambda s: (-sum(s), s))
    index = {s: i for i, s in enumerate(states)}
    q = np.zeros((len(states), n))
    for i, s in enumerate(states):
        p = click_probabilities(profile, s)
        for a in range(n):
            nxt = list(s)
            nxt[a] += 1
            nxt = tuple(nxt)
            cont = _continuation(profile, sum(nxt), horizon)
            future = q[index[nxt]].max() if cont > 0 else 0.0
            q[i, a] = p[a] + gamma * cont * future
    return TabularQ(states, q, index)


SlatePolicy = Callable[[tuple[int, ...]], Sequence[tuple[tuple[int, ...], float]]]


@dataclass
class SlateTabularQ:
    """Item-level values Q-bar(s, i) plus the slate value V(s) per state."""

    states: list[tuple[int, ...]]
    item_q: np.ndarray
    value: np.ndarray
    index: dict[tuple[int, ...], int]

    def item_values(self, state: tuple[int, ...]) -> np.ndarray:
        return self.item_q[self.index[tuple(state)]]


def ground_truth_slate_q(
    profile: CustomerProfile,
    items: Sequence[ContentItem],
    k: int,
    gamma: float,
    horizon: int,
    policy: Optional[SlatePolicy] = None,
    enumeration_limit: int = 50_000,
) -> SlateTabularQ:
    """Exact item-level values for slate rounds.

    ``policy`` maps a count tuple to ``[(item index tuple, prob), ...]``; when
    omitted the optimal (max over k-subsets) slate value is used.
    """
    n = len(profile.base_utility)
    m = len(items)
    if horizon <= 0:
        s0 = (0,) * n
        return SlateTabularQ([s0], np.zeros((1, m)), np.zeros(1), {s0: 0})
    size = n_count_states(n, horizon - 1)
    if size > enumeration_limit:
        raise EnumerationLimitError(
            f"{size} states exceed the enumeration limit of {enumeration_limit}"
        )
    model = SlateChoiceModel.for_profile(profile)
    states = sorted(count_states(n, horizon - 1), key=lambda s: (-sum(s), s))
    index = {s: i for i, s in enumerate(states)}
    item_q = np.zeros((len(states), m))
    value = np.zeros(len(states))
    subsets = list(itertools.combinations(range(m), k))
    for si, s in enumerate(states):
        for j, item in enumerate(items):
            nxt = list(s)
            nxt[item.content_type.index] += 1
            nxt = tuple(nxt)
            cont = _continuation(profile, sum(nxt), horizon)
            item_q[si, j] = 1.0 + (gamma * cont * value[index[nxt]] if cont > 0 else 0.0)

        def slate_val(sub):
            probs, _ = model.probabilities(s, [items[j] for j in sub])
            return float(probs @ item_q[si, list(sub)])

        if policy is None:
            value[si] = max(slate_val(sub) for sub in subsets)
        else:
            value[si] = sum(prob * slate_val(sub) for sub, prob in policy(s))
    return SlateTabularQ(states, item_q, value, index)
