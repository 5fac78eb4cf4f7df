"""Domain value types shared by the simulator, agents and harness.

Every type here is immutable, so instances can be handed between threads
without copying.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

DEFAULT_TYPE_NAMES = (
    "discount_card",
    "detail_picture",
    "shopping",
    "product_card",
    "live_slice",
    "commodity_display",
    "color_test",
    "detail_display",
)


@dataclass(frozen=True, slots=True)
class ContentType:
    index: int
    name: str


def content_types(n_types: int) -> tuple[ContentType, ...]:
    """Dense catalog of `n_types` content types with readable names."""
    if n_types < 2:
        raise ValueError(f"n_types must be >= 2, got {n_types}")
    names = [
        DEFAULT_TYPE_NAMES[i] if i < len(DEFAULT_TYPE_NAMES) else f"type_{i}"
        for i in range(n_types)
    ]
    return tuple(ContentType(i, name) for i, name in enumerate(names))


@dataclass(frozen=True, slots=True)
class ContentItem:
    content_id: str
    content_type: ContentType
    content_tab: Optional[str] = None


@dataclass(frozen=True, slots=True)
class Context:
    user_id: str
    store_id: str

    def __post_init__(self):
        if not self.user_id or not self.store_id:
            raise ValueError("context ids must be non-empty")


@dataclass(frozen=True, slots=True)
class Action:
    content_type_index: int


@dataclass(frozen=True, slots=True)
class ExposureState:
    """Per-content-type exposure counts of one customer session."""

    counts: tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError(f"exposure counts must be non-negative: {self.counts}")

    @classmethod
    def zeros(cls, n_types: int) -> "ExposureState":
        return cls((0,) * n_types)

    @property
    def n_types(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(self.counts)


def increment_exposure(state: ExposureState, action: Action) -> ExposureState:
    """Return a copy of `state` with the acted-on type's count raised by one."""
    a = action.content_type_index
    if not 0 <= a < len(state.counts):
        raise IndexError(
            f"action {a} out of range for {len(state.counts)} content types"
        )
    counts = list(state.counts)
    counts[a] += 1
    return ExposureState(tuple(counts))


@dataclass(frozen=True, slots=True)
class Transition:
    context: Context
    state: ExposureState
    action: Action
    reward: float
    next_state: ExposureState
    done: bool
    timestamp: int
    session_id: int = 0
    step: int = 0
    deal: bool = False

    def is_valid(self) -> bool:
        """Check the +1 next-state rule and the binary reward."""
        if self.reward not in (0.0, 1.0):
            return False
        if self.deal and self.reward != 1.0:
            return False
        a = self.action.content_type_index
        if not 0 <= a < len(self.state.counts):
            return False
        if len(self.next_state.counts) != len(self.state.counts):
            return False
        return all(
            n == s + (1 if i == a else 0)
            for i, (s, n) in enumerate(zip(self.state.counts, self.next_state.counts))
        )


def exposure_from(counts: Sequence[int]) -> ExposureState:
    return ExposureState(tuple(int(c) for c in counts))


__all__ = [
    "Action",
    "ContentItem",
    "ContentType",
    "Context",
    "ExposureState",
    "Transition",
    "content_types",
    "exposure_from",
    "increment_exposure",
]
