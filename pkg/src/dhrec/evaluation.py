"""Offline ranking metrics over time-split interaction logs.

Each validation round becomes one :class:`RankedQuery`: the model ranks
every content type for the logged (context, state); the relevant action
is the logged one when it earned a click, and absent otherwise.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class RankedQuery:
    query_id: int
    ranking: tuple[int, ...]
    relevant_rank: Optional[int] = None  # 1-based

    def __post_init__(self):
        if sorted(self.ranking) != list(range(len(self.ranking))):
            raise MetricsError(f"ranking is not a permutation: {self.ranking}")
        if self.relevant_rank is not None and not 1 <= self.relevant_rank <= len(self.ranking):
            raise MetricsError(f"relevant rank {self.relevant_rank} outside 1..{len(self.ranking)}")


def rank_actions(scores: np.ndarray) -> tuple[int, ...]:
    """Actions by descending score; equal scores keep lowest index first."""
    return tuple(int(a) for a in np.argsort(-np.asarray(scores), kind="stable"))


def make_query(query_id: int, scores: np.ndarray, relevant: Optional[int]) -> RankedQuery:
    ranking = rank_actions(scores)
    rank = None if relevant is None else ranking.index(relevant) + 1
    return RankedQuery(query_id, ranking, rank)


def _nonempty(queries: Sequence[RankedQuery]) -> None:
    if len(queries) == 0:
        raise MetricsError("no queries")


def mrr(queries: Sequence[RankedQuery]) -> float:
    _nonempty(queries)
    return float(sum(1.0 / q.relevant_rank for q in queries if q.relevant_rank) / len(queries))


def hits_at_k(queries: Sequence[RankedQuery], k: int) -> float:
    if k < 1:
        raise MetricsError(f"K must be >= 1, got {k}")
    _nonempty(queries)
    return sum(1 for q in queries if q.relevant_rank and q.relevant_rank <= k) / len(queries)


def conversion_rate(sessions: Sequence[Sequence]) -> float:
    """Fraction of sessions with at least one deal; items need a ``deal`` attribute."""
    if len(sessions) == 0:
        raise MetricsError("no sessions")
    return sum(1 for s in sessions if any(t.deal for t in s)) / len(sessions)


def time_split(records: Sequence, split_timestamp: int) -> tuple[list, list]:
    """Partition whole sessions by the timestamp of their first record."""
    first: dict[int, int] = {}
    for r in records:
        first[r.session_id] = min(r.timestamp, first.get(r.session_id, r.timestamp))
    train = [r for r in records if first[r.session_id] < split_timestamp]
    valid = [r for r in records if first[r.session_id] >= split_timestamp]
    if records and (not train or not valid):
        warnings.warn(
            f"split timestamp {split_timestamp} lies outside the observed range; one side is empty",
            stacklevel=2,
        )
    return train, valid


Scorer = Callable[[Sequence], np.ndarray]


def build_queries(records: Sequence, scorer: Scorer, chunk: int = 4096) -> list[RankedQuery]:
    queries = []
    for lo in range(0, len(records), chunk):
        part = records[lo : lo + chunk]
        scores = np.asarray(scorer(part))
        for j, r in enumerate(part):
            action = getattr(r.action, "content_type_index", r.action)
            relevant = int(action) if r.reward == 1.0 else None
            queries.append(make_query(lo + j, scores[j], relevant))
    return queries


@dataclass
class MetricsReport:
    agent: str
    mrr: float
    hits_at_k: dict[int, float]
    conversion_rate: float
    n_queries: int
    config_digest: str
    seed: int
    mrr_relevant: float = 0.0
    hits_at_k_relevant: dict[int, float] = field(default_factory=dict)
    n_relevant: int = 0
    mean_return: float = 0.0
    n_sessions: int = 0
    policy_entropy: Optional[float] = None

    def to_json(self) -> str:
        d = {
            "agent": self.agent,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "n_queries": self.n_queries,
            "n_relevant": self.n_relevant,
            "mrr": self.mrr,
            "hits_at_k": {str(k): v for k, v in sorted(self.hits_at_k.items())},
            "mrr_relevant": self.mrr_relevant,
            "hits_at_k_relevant": {str(k): v for k, v in sorted(self.hits_at_k_relevant.items())},
            "conversion_rate": self.conversion_rate,
            "mean_return": self.mean_return,
            "n_sessions": self.n_sessions,
            "policy_entropy": self.policy_entropy,
        }
        return json.dumps(d, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        d = json.loads(text)
        return cls(
            agent=d["agent"],
            mrr=d["mrr"],
            hits_at_k={int(k): v for k, v in d["hits_at_k"].items()},
            conversion_rate=d["conversion_rate"],
            n_queries=d["n_queries"],
            config_digest=d["config_digest"],
            seed=d["seed"],
            mrr_relevant=d["mrr_relevant"],
            hits_at_k_relevant={int(k): v for k, v in d["hits_at_k_relevant"].items()},
            n_relevant=d["n_relevant"],
            mean_return=d["mean_return"],
            n_sessions=d["n_sessions"],
            policy_entropy=d["policy_entropy"],
        )


def summarize(
    agent: str,
    queries: Sequence[RankedQuery],
    sessions: Sequence[Sequence],
    config_digest: str,
    seed: int,
    ks: Iterable[int] = (1, 3, 5),
    policy_entropy: Optional[float] = None,
) -> MetricsReport:
    ks = sorted(set(ks))
    relevant = [q for q in queries if q.relevant_rank is not None]
    returns = [sum(t.reward for t in s) for s in sessions]
    return MetricsReport(
        agent=agent,
        mrr=mrr(queries),
        hits_at_k={k: hits_at_k(queries, k) for k in ks},
        conversion_rate=conversion_rate(sessions) if sessions else 0.0,
        n_queries=len(queries),
        config_digest=config_digest,
        seed=seed,
        mrr_relevant=mrr(relevant) if relevant else 0.0,
        hits_at_k_relevant={k: hits_at_k(relevant, k) for k in ks} if relevant else {k: 0.0 for k in ks},
        n_relevant=len(relevant),
        mean_return=float(np.mean(returns)) if returns else 0.0,
        n_sessions=len(sessions),
        policy_entropy=policy_entropy,
    )
