"""Deterministic random streams.

All randomness flows through PCG64 generators seeded from a
``SeedSequence``; the bit streams are platform independent.  Independent
sub-streams (per session, per purpose) are keyed by integers so that the
order in which sessions are scheduled never changes what they draw.
"""

from __future__ import annotations

import zlib

import numpy as np

# purpose tags for sub-streams; values are part of the reproducibility contract
PROFILE = 1
ENV = 2
POLICY = 3
LEARNER = 4
INIT = 5
POPULATION = 6
EVAL = 7

# session-id namespaces so dataset, training and evaluation sessions never collide
DATASET_SESSIONS = 11
TRAIN_SESSIONS = 12
EVAL_SESSIONS = 13


def seeded_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_u64(seed))))


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the sub-stream identified by ``(seed, *keys)``."""
    entropy = [_u64(seed)] + [_u64(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def stable_hash(text: str, buckets: int) -> int:
    # builtin hash() is salted per process
    return zlib.crc32(text.encode("utf-8")) % buckets


def _u64(x: int) -> int:
    x = int(x)
    if x < 0:
        x &= (1 << 64) - 1
    if x >= 1 << 64:
        raise ValueError(f"seed key {x} does not fit in 64 bits")
    return x
