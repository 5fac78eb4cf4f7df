"""Experiment configuration and its INI-style file format.

The file is a set of ``[section]`` blocks of ``key = value`` lines.  Keys
are fixed per section (see :data:`SCHEMA`); unknown keys and sections are
rejected.  Floats are written with ``repr`` so serialize -> parse ->
serialize is byte-identical.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


def _f(section: str, default: Any) -> Any:
    return field(default=default, metadata={"section": section})


@dataclass(frozen=True)
class ExperimentConfig:
    # [experiment]
    seed: int = _f("experiment", 42)
    n_types: int = _f("experiment", 8)
    split_timestamp: int = _f("experiment", 300)

    # [env] -- simulated customer population
    session_cap: int = _f("env", 20)
    patience: float = _f("env", 12.0)
    patience_jitter: float = _f("env", 0.25)
    type_utility: tuple[float, ...] = _f("env", ())
    n_segments: int = _f("env", 4)
    segment_std: float = _f("env", 1.5)
    user_std: float = _f("env", 0.5)
    null_utility: float = _f("env", 1.0)
    satiation_mean: float = _f("env", 0.8)
    satiation_std: float = _f("env", 0.2)
    conversion_prob: float = _f("env", 0.2)

    # [agent]
    gamma: float = _f("agent", 0.7)
    alpha: float = _f("agent", 0.05)
    hidden: int = _f("agent", 64)
    lr_actor: float = _f("agent", 0.0003)
    lr_critic: float = _f("agent", 0.001)
    tau: float = _f("agent", 0.01)
    batch_size: int = _f("agent", 128)
    replay_capacity: int = _f("agent", 100000)
    warmup: int = _f("agent", 256)
    updates_per_tick: int = _f("agent", 1)
    train_steps: int = _f("agent", 3000)
    user_buckets: int = _f("agent", 8)
    store_buckets: int = _f("agent", 8)
    count_cap: int = _f("agent", 5)
    sarsa_lr: float = _f("agent", 0.1)
    sarsa_epsilon: float = _f("agent", 0.1)
    slate_size: int = _f("agent", 2)
    slateq_lr: float = _f("agent", 0.1)

    # [dfm]
    factor_dim: int = _f("dfm", 8)
    dfm_hidden: int = _f("dfm", 32)
    dfm_lr: float = _f("dfm", 0.01)
    dfm_epochs: int = _f("dfm", 200)

    # [harness]
    n_sessions: int = _f("harness", 2000)
    pool_size: int = _f("harness", 32)
    logging_policy: str = _f("harness", "uniform")
    logging_checkpoint: str = _f("harness", "")
    eval_sessions: int = _f("harness", 500)

    def __post_init__(self):
        object.__setattr__(self, "type_utility", tuple(float(u) for u in self.type_utility))
        validate(self)

    @property
    def utilities(self) -> tuple[float, ...]:
        """Per-type population mean utility (zeros when left unset)."""
        return self.type_utility or (0.0,) * self.n_types

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return dump_config(self)

    def digest(self) -> str:
        """Digest of every setting except the seed (reported separately)."""
        body = dump_config(dataclasses.replace(self, seed=0))
        return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]


SECTIONS = ("experiment", "env", "agent", "dfm", "harness")

SCHEMA: dict[str, list[dataclasses.Field]] = {s: [] for s in SECTIONS}
for _fld in dataclasses.fields(ExperimentConfig):
    SCHEMA[_fld.metadata["section"]].append(_fld)


def validate(cfg: ExperimentConfig) -> None:
    def need(cond: bool, msg: str):
        if not cond:
            raise ConfigError(msg)

    need(cfg.n_types >= 2, "n_types must be >= 2")
    need(0.0 <= cfg.gamma < 1.0, "gamma must lie in [0, 1)")
    need(cfg.alpha > 0.0, "alpha must be > 0")
    need(cfg.lr_actor > 0 and cfg.lr_critic > 0, "learning rates must be > 0")
    need(0.0 < cfg.tau <= 1.0, "tau must lie in (0, 1]")
    need(cfg.replay_capacity >= 1, "replay_capacity must be >= 1")
    need(cfg.batch_size >= 1, "batch_size must be >= 1")
    need(cfg.session_cap >= 1, "session_cap must be >= 1")
    need(cfg.patience > 0, "patience must be > 0")
    need(0.0 <= cfg.patience_jitter < 1.0, "patience_jitter must lie in [0, 1)")
    need(
        len(cfg.type_utility) in (0, cfg.n_types),
        f"type_utility needs {cfg.n_types} entries, got {len(cfg.type_utility)}",
    )
    need(cfg.n_segments >= 1, "n_segments must be >= 1")
    need(cfg.segment_std >= 0 and cfg.user_std >= 0, "stds must be >= 0")
    need(cfg.satiation_mean >= 0 and cfg.satiation_std >= 0, "satiation must be >= 0")
    need(0.0 <= cfg.conversion_prob <= 1.0, "conversion_prob must lie in [0, 1]")
    need(cfg.count_cap >= 1, "count_cap must be >= 1")
    need(0.0 < cfg.sarsa_lr <= 1.0, "sarsa_lr must lie in (0, 1]")
    need(0.0 <= cfg.sarsa_epsilon <= 1.0, "sarsa_epsilon must lie in [0, 1]")
    need(1 <= cfg.slate_size <= cfg.n_types, "slate_size must lie in [1, n_types]")
    need(0.0 < cfg.slateq_lr <= 1.0, "slateq_lr must lie in (0, 1]")
    need(cfg.user_buckets >= 1 and cfg.store_buckets >= 1, "buckets must be >= 1")
    need(cfg.factor_dim >= 1 and cfg.dfm_hidden >= 1, "dfm sizes must be >= 1")
    need(cfg.n_sessions >= 0 and cfg.eval_sessions >= 0, "session counts must be >= 0")
    need(cfg.pool_size >= 1, "pool_size must be >= 1")
    need(cfg.logging_policy in ("uniform", "dfm"), "logging_policy must be uniform|dfm")
    need(
        cfg.logging_policy != "dfm" or bool(cfg.logging_checkpoint),
        "logging_policy=dfm requires logging_checkpoint",
    )


def _format(value: Any) -> str:
    if isinstance(value, bool):
        raise TypeError("booleans are not used in the config schema")
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _parse(fld: dataclasses.Field, raw: str) -> Any:
    kind = fld.type
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind.startswith("tuple"):
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {fld.name}: {raw!r}") from exc
    raise ConfigError(f"unsupported field type {kind} for {fld.name}")


def dump_config(cfg: ExperimentConfig) -> str:
    lines: list[str] = []
    for section in SECTIONS:
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for fld in SCHEMA[section]:
            lines.append(f"{fld.name} = {_format(getattr(cfg, fld.name))}".rstrip())
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str  # keys are case sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values: dict[str, Any] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        known = {f.name: f for f in SCHEMA[section]}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _parse(known[key], raw)
    return ExperimentConfig(**values)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(cfg), encoding="utf-8")
