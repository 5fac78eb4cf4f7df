from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Batch:
    x: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_x: np.ndarray
    done: np.ndarray

    def __len__(self) -> int:
        return len(self.action)


class ReplayBuffer:
    """Fixed-capacity ring of encoded transitions with uniform sampling."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.x = np.zeros((capacity, dim))
        self.next_x = np.zeros((capacity, dim))
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, x, action: int, reward: float, next_x, done: bool) -> None:
        i = self.ptr
        self.x[i] = x
        self.action[i] = action
        self.reward[i] = reward
        self.next_x[i] = next_x
        self.done[i] = float(done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self.x[idx], self.action[idx], self.reward[idx], self.next_x[idx], self.done[idx])
