"""State featurization shared by the network-based agents."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from dhrec.core.rng import stable_hash
from dhrec.core.types import Context


class StateEncoder:
    """Scaled exposure counts followed by one-hot user and store hash buckets."""

    def __init__(self, n_types: int, user_buckets: int = 8, store_buckets: int = 8, count_cap: int = 5):
        self.n_types = n_types
        self.user_buckets = user_buckets
        self.store_buckets = store_buckets
        self.count_cap = count_cap
        self._ctx_cache: dict[Context, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self.n_types + self.user_buckets + self.store_buckets

    def context_features(self, context: Context) -> np.ndarray:
        cached = self._ctx_cache.get(context)
        if cached is None:
            cached = np.zeros(self.user_buckets + self.store_buckets)
            cached[stable_hash(context.user_id, self.user_buckets)] = 1.0
            cached[self.user_buckets + stable_hash(context.store_id, self.store_buckets)] = 1.0
            if len(self._ctx_cache) < 100_000:
                self._ctx_cache[context] = cached
        return cached

    def encode(self, context: Context, counts: Sequence[int]) -> np.ndarray:
        c = np.asarray(counts, dtype=float) / (1.0 + self.count_cap)
        return np.concatenate([c, self.context_features(context)])

    def encode_batch(self, contexts: Sequence[Context], counts: np.ndarray) -> np.ndarray:
        counts = np.asarray(counts, dtype=float).reshape(len(contexts), self.n_types)
        ctx = np.array([self.context_features(c) for c in contexts]).reshape(len(contexts), -1)
        return np.hstack([counts / (1.0 + self.count_cap), ctx])

    def to_dict(self) -> dict:
        return {
            "n_types": self.n_types,
            "user_buckets": self.user_buckets,
            "store_buckets": self.store_buckets,
            "count_cap": self.count_cap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateEncoder":
        return cls(d["n_types"], d["user_buckets"], d["store_buckets"], d["count_cap"])
