"""Line-delimited JSON interaction logs.

Line 1 is a header object (``"format": "dhrec-interactions"``); every
following line is one :class:`InteractionLogRecord` with keys in the fixed
order of :data:`FIELDS`.  Strings use standard JSON escaping with
non-ASCII characters written as ``\\uXXXX``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from dhrec.core.types import Action, Context, ExposureState, Transition

LOG_FORMAT = "dhrec-interactions"
LOG_VERSION = 1

FIELDS = (
    "session_id",
    "step",
    "user_id",
    "store_id",
    "state",
    "action",
    "reward",
    "deal",
    "next_state",
    "done",
    "timestamp",
)


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True)
class InteractionLogRecord:
    session_id: int
    step: int
    user_id: str
    store_id: str
    state: tuple[int, ...]
    action: int
    reward: float
    deal: bool
    next_state: tuple[int, ...]
    done: bool
    timestamp: int

    @property
    def context(self) -> Context:
        return Context(self.user_id, self.store_id)

    @classmethod
    def from_transition(cls, t: Transition) -> "InteractionLogRecord":
        return cls(
            session_id=t.session_id,
            step=t.step,
            user_id=t.context.user_id,
            store_id=t.context.store_id,
            state=tuple(t.state.counts),
            action=t.action.content_type_index,
            reward=float(t.reward),
            deal=bool(t.deal),
            next_state=tuple(t.next_state.counts),
            done=bool(t.done),
            timestamp=t.timestamp,
        )

    def to_transition(self) -> Transition:
        return Transition(
            context=self.context,
            state=ExposureState(self.state),
            action=Action(self.action),
            reward=self.reward,
            next_state=ExposureState(self.next_state),
            done=self.done,
            timestamp=self.timestamp,
            session_id=self.session_id,
            step=self.step,
            deal=self.deal,
        )

    def to_line(self) -> str:
        d = {
            "session_id": self.session_id,
            "step": self.step,
            "user_id": self.user_id,
            "store_id": self.store_id,
            "state": list(self.state),
            "action": self.action,
            "reward": self.reward,
            "deal": self.deal,
            "next_state": list(self.next_state),
            "done": self.done,
            "timestamp": self.timestamp,
        }
        return json.dumps(d, separators=(",", ":"), ensure_ascii=True)


def _int(d: dict, key: str) -> int:
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise LogFormatError(f"{key} must be an integer, got {v!r}")
    return v


def _counts(d: dict, key: str) -> tuple[int, ...]:
    v = d[key]
    if not isinstance(v, list) or not all(isinstance(c, int) and not isinstance(c, bool) and c >= 0 for c in v):
        raise LogFormatError(f"{key} must be a list of non-negative integers, got {v!r}")
    return tuple(v)


def _bool(d: dict, key: str) -> bool:
    v = d[key]
    if not isinstance(v, bool):
        raise LogFormatError(f"{key} must be a boolean, got {v!r}")
    return v


def _str(d: dict, key: str) -> str:
    v = d[key]
    if not isinstance(v, str) or not v:
        raise LogFormatError(f"{key} must be a non-empty string, got {v!r}")
    return v


def parse_record(line: str) -> InteractionLogRecord:
    try:
        d = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"malformed log line: {exc}") from exc
    if not isinstance(d, dict) or tuple(d.keys()) != FIELDS:
        raise LogFormatError(f"record keys must be exactly {FIELDS}")
    reward = d["reward"]
    if isinstance(reward, bool) or reward not in (0.0, 1.0):
        raise LogFormatError(f"reward must be 0.0 or 1.0, got {reward!r}")
    return InteractionLogRecord(
        session_id=_int(d, "session_id"),
        step=_int(d, "step"),
        user_id=_str(d, "user_id"),
        store_id=_str(d, "store_id"),
        state=_counts(d, "state"),
        action=_int(d, "action"),
        reward=float(reward),
        deal=_bool(d, "deal"),
        next_state=_counts(d, "next_state"),
        done=_bool(d, "done"),
        timestamp=_int(d, "timestamp"),
    )


def header_line(header: dict) -> str:
    return json.dumps({"format": LOG_FORMAT, "version": LOG_VERSION, **header}, separators=(",", ":"))


def write_log(path: str | Path, header: dict, records: Iterable[InteractionLogRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header_line(header) + "\n")
        for r in records:
            fh.write(r.to_line() + "\n")


def read_log(path: str | Path) -> tuple[dict, list[InteractionLogRecord]]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise LogFormatError("missing or malformed log header") from exc
        if header.get("format") != LOG_FORMAT or header.get("version") != LOG_VERSION:
            raise LogFormatError(f"unsupported log header: {header}")
        records = [parse_record(line) for line in fh if line.strip()]
    return header, records


def group_sessions(records: Sequence[InteractionLogRecord]) -> list[list[InteractionLogRecord]]:
    by_id: dict[int, list[InteractionLogRecord]] = {}
    for r in records:
        by_id.setdefault(r.session_id, []).append(r)
    return [sorted(v, key=lambda r: r.step) for _, v in sorted(by_id.items())]
