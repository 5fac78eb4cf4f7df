"""SlateQ: slate values decomposed into item-level values weighted by a choice model.

    Q(s, A) = sum_{i in A} P(i | s, A) * Qbar(s, i)

The no-click option has value 0 and never triggers an update.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from dhrec.agents.sarsa import discretize
from dhrec.core.types import ContentItem
from dhrec.env import check_slate, mnl_probabilities


class ChoiceModel(Protocol):
    def probabilities(self, counts: Sequence[int], slate: Sequence[ContentItem]) -> tuple[np.ndarray, float]: ...


@dataclass
class LogitChoiceModel:
    """Population-level choice model ``u(s, i) = w[type(i)] - beta * counts[type(i)]``, null utility 0.

    Fitted from single-exposure logs, where the multinomial logit over a one-item
    slate reduces to a logistic click model.
    """

    type_weight: np.ndarray
    satiation: float
    null_utility: float = 0.0

    def utility(self, counts: Sequence[int], item: ContentItem) -> float:
        a = item.content_type.index
        return float(self.type_weight[a] - self.satiation * counts[a])

    def probabilities(self, counts, slate):
        check_slate(slate)
        utils = np.array([self.utility(counts, it) for it in slate])
        return mnl_probabilities(utils, self.null_utility)

    def to_dict(self) -> dict:
        return {
            "type_weight": self.type_weight.tolist(),
            "satiation": self.satiation,
            "null_utility": self.null_utility,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogitChoiceModel":
        return cls(np.asarray(d["type_weight"], dtype=float), float(d["satiation"]), float(d["null_utility"]))


def fit_choice_model(actions: np.ndarray, counts: np.ndarray, clicks: np.ndarray, l2: float = 1e-4) -> LogitChoiceModel:
    """Maximum-likelihood logistic click model on (action, state counts, click) rows."""
    actions = np.asarray(actions, dtype=np.int64)
    counts = np.asarray(counts, dtype=float)
    y = np.asarray(clicks, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot fit a choice model on an empty log")
    n_types = counts.shape[1]
    seen = counts[np.arange(len(actions)), actions]
    onehot = np.zeros((len(actions), n_types))
    onehot[np.arange(len(actions)), actions] = 1.0

    def nll(theta):
        w, beta = theta[:-1], theta[-1]
        z = onehot @ w - beta * seen
        loss = -(y * log_expit(z) + (1 - y) * log_expit(-z)).mean() + 0.5 * l2 * theta @ theta
        r = (expit(z) - y) / len(y)
        grad = np.append(onehot.T @ r, -(r @ seen)) + l2 * theta
        return loss, grad

    res = minimize(nll, np.zeros(n_types + 1), jac=True, method="L-BFGS-B")
    return LogitChoiceModel(res.x[:-1].copy(), float(res.x[-1]))


@dataclass
class QBarTable:
    """Item-level values keyed by (capped counts, item id); unseen entries are 0."""

    count_cap: int = 5
    values: dict[tuple[tuple[int, ...], str], float] = field(default_factory=dict)

    def get(self, counts: Sequence[int], item: ContentItem) -> float:
        return self.values.get((discretize(counts, self.count_cap), item.content_id), 0.0)

    def set(self, counts: Sequence[int], item: ContentItem, value: float) -> None:
        if not np.isfinite(value):
            raise FloatingPointError("non-finite item value")
        self.values[(discretize(counts, self.count_cap), item.content_id)] = float(value)

    def __call__(self, counts, item) -> float:
        return self.get(counts, item)

    def to_dict(self) -> dict:
        return {
            "count_cap": self.count_cap,
            "entries": [[list(s), i, v] for (s, i), v in sorted(self.values.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QBarTable":
        t = cls(d["count_cap"])
        for s, i, v in d["entries"]:
            t.values[(tuple(s), i)] = float(v)
        return t


def slate_value(counts: Sequence[int], slate: Sequence[ContentItem], qbar, choice_model: ChoiceModel) -> float:
    """sum_i P(i | s, slate) * Qbar(s, i); the no-click option contributes 0."""
    probs, _ = choice_model.probabilities(counts, slate)
    return float(sum(p * qbar(counts, item) for p, item in zip(probs, slate)))


def select_slate(
    counts: Sequence[int],
    candidates: Sequence[ContentItem],
    k: int,
    qbar,
    choice_model: ChoiceModel,
    mode: str = "exhaustive",
) -> tuple[ContentItem, ...]:
    """Best k-item slate; ties go to the lexicographically smallest id set."""
    if k <= 0:
        raise ValueError(f"slate size must be positive, got {k}")
    if k > len(candidates):
        raise ValueError(f"slate size {k} exceeds {len(candidates)} candidates")
    pool = sorted(candidates, key=lambda it: it.content_id)
    if mode == "exhaustive":
        best, best_val = None, -np.inf
        for combo in itertools.combinations(pool, k):
            v = slate_value(counts, combo, qbar, choice_model)
            if v > best_val:
                best, best_val = combo, v
        return tuple(best)
    if mode == "greedy":
        chosen: list[ContentItem] = []
        rest = list(pool)
        for _ in range(k):
            vals = [slate_value(counts, chosen + [c], qbar, choice_model) for c in rest]
            j = int(np.argmax(vals))
            chosen.append(rest.pop(j))
        return tuple(sorted(chosen, key=lambda it: it.content_id))
    raise ValueError(f"unknown selection mode {mode!r}")


def slateq_update(
    qbar: QBarTable,
    choice_model: ChoiceModel,
    counts: Sequence[int],
    slate: Sequence[ContentItem],
    chosen: Optional[ContentItem],
    reward: float,
    next_counts: Sequence[int],
    next_slate: Optional[Sequence[ContentItem]],
    lr: float,
    gamma: float,
    done: bool = False,
) -> QBarTable:
    """TD update of the clicked item's value; a no-click leaves the table alone."""
    if chosen is not None and chosen.content_id not in {it.content_id for it in slate}:
        raise ValueError(f"chosen item {chosen.content_id} is not on the slate")
    check_slate(slate)
    if chosen is None or lr == 0.0:
        return qbar
    bootstrap = 0.0
    if not done:
        if not next_slate:
            raise ValueError("non-terminal update needs the next slate")
        bootstrap = slate_value(next_counts, next_slate, qbar, choice_model)
    old = qbar.get(counts, chosen)
    qbar.set(counts, chosen, old + lr * (reward + gamma * bootstrap - old))
    return qbar


class SlateQAgent:
    def __init__(
        self,
        items: Sequence[ContentItem],
        choice_model: ChoiceModel,
        k: int = 2,
        gamma: float = 0.7,
        lr: float = 0.1,
        count_cap: int = 5,
        epsilon: float = 0.1,
        mode: str = "exhaustive",
    ):
        if not 1 <= k <= len(items):
            raise ValueError(f"slate size must lie in [1, {len(items)}]")
        self.items = tuple(items)
        self.choice_model = choice_model
        self.k = k
        self.gamma = gamma
        self.lr = lr
        self.epsilon = epsilon
        self.mode = mode
        self.qbar = QBarTable(count_cap)

    def select(self, counts, explore: bool = False, rng: Optional[np.random.Generator] = None) -> tuple[ContentItem, ...]:
        if explore:
            if rng is None:
                raise ValueError("exploration needs a random generator")
            u = rng.random()
            pick = rng.permutation(len(self.items))[: self.k]
            if u < self.epsilon:
                return tuple(sorted((self.items[j] for j in pick), key=lambda it: it.content_id))
        return select_slate(counts, self.items, self.k, self.qbar, self.choice_model, self.mode)

    def learn(self, counts, slate, chosen, reward, next_counts, next_slate, done) -> None:
        slateq_update(
            self.qbar, self.choice_model, counts, slate, chosen, reward,
            next_counts, next_slate, self.lr, self.gamma, done,
        )

    def scores(self, contexts, counts: np.ndarray) -> np.ndarray:
        """Score each content type by the value of the one-item slate holding it."""
        out = np.zeros((len(counts), len(self.items)))
        for b, c in enumerate(np.asarray(counts)):
            for j, item in enumerate(self.items):
                out[b, j] = slate_value(c, [item], self.qbar, self.choice_model)
        return out
