"""One learner serving a pool of concurrent customer sessions.

Each tick the policy decides for every live session at once (a read-only
snapshot of the agent), the sessions are advanced, optionally spread over
worker threads, and the outcomes are handed to the learner in slot order.
Random streams are keyed by session id, so the number of workers changes
scheduling only.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

from dhrec import env as sim

Decide = Callable[[Sequence[sim.SessionHandle]], Sequence[Any]]
Advance = Callable[[sim.SessionHandle, Any], Any]
OnTick = Callable[[int, Sequence[sim.SessionHandle], Sequence[Any], Sequence[Any]], None]


def _advance_step(session: sim.SessionHandle, action) -> Any:
    t, _ = sim.step(session, action)
    return t


@dataclass
class PoolResult:
    finished: list[sim.SessionHandle] = field(default_factory=list)
    ticks: int = 0
    opened: int = 0


def run_pool(
    pop: sim.PopulationParams,
    seed: int,
    decide: Decide,
    *,
    namespace: int,
    pool_size: int,
    advance: Advance = _advance_step,
    max_sessions: Optional[int] = None,
    max_ticks: Optional[int] = None,
    workers: int = 1,
    on_tick: Optional[OnTick] = None,
    keep_finished: bool = True,
) -> PoolResult:
    """Run sessions until ``max_sessions`` have finished or ``max_ticks`` elapse.

    Finished sessions are returned in retirement order (tick, then slot).
    """
    if max_sessions is None and max_ticks is None:
        raise ValueError("need max_sessions or max_ticks")
    if pool_size < 1 or workers < 1:
        raise ValueError("pool_size and workers must be >= 1")
    slots: list[Optional[sim.SessionHandle]] = [None] * pool_size
    result = PoolResult()
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def retire(i: int) -> None:
        s = slots[i]
        if s is not None and not s.alive:
            if keep_finished:
                result.finished.append(s)
            slots[i] = None

    try:
        while max_ticks is None or result.ticks < max_ticks:
            for i in range(pool_size):
                retire(i)
                if slots[i] is None and (max_sessions is None or result.opened < max_sessions):
                    slots[i] = sim.open_session(pop, seed, result.opened, namespace, start_time=result.ticks)
                    result.opened += 1
            live = [s for s in slots if s is not None]
            if not live:
                break
            decisions = list(decide(live))
            if len(decisions) != len(live):
                raise RuntimeError("policy returned the wrong number of decisions")
            if executor is None:
                outcomes = [advance(s, d) for s, d in zip(live, decisions)]
            else:
                outcomes = list(executor.map(advance, live, decisions))
            if on_tick is not None:
                on_tick(result.ticks, live, decisions, outcomes)
            result.ticks += 1
        for i in range(pool_size):
            retire(i)
    finally:
        if executor is not None:
            executor.shutdown()
    return result
