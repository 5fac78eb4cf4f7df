"""Versioned JSON container for agent checkpoints.

Layout::

    {"format": "dhrec-checkpoint", "version": 1, "agent": ..., "config_digest": ...,
     "seed": ..., "steps": ..., "networks": {name: mlp}, "tables": {name: table},
     "extra": {...}}

Floats are written with ``repr`` (the json default), which round-trips
float64 exactly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from dhrec.nn import Mlp

CHECKPOINT_FORMAT = "dhrec-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps_checkpoint(
    agent: str,
    config_digest: str,
    seed: int,
    steps: int,
    networks: Optional[dict[str, Mlp]] = None,
    tables: Optional[dict] = None,
    extra: Optional[dict] = None,
) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "agent": agent,
        "config_digest": config_digest,
        "seed": seed,
        "steps": steps,
        "networks": {k: v.to_dict() for k, v in (networks or {}).items()},
        "tables": tables or {},
        "extra": extra or {},
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def save_checkpoint(path: str | Path, **kwargs) -> None:
    Path(path).write_text(dumps_checkpoint(**kwargs), encoding="utf-8")


def loads_checkpoint(text: str) -> dict:
    doc = json.loads(text)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a dhrec checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    doc["networks"] = {k: Mlp.from_dict(v) for k, v in doc["networks"].items()}
    return doc


def load_checkpoint(path: str | Path) -> dict:
    return loads_checkpoint(Path(path).read_text(encoding="utf-8"))
