from dhrec.core.config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config, save_config
from dhrec.core.rng import seeded_rng, stable_hash, substream
from dhrec.core.types import (
    Action,
    ContentItem,
    ContentType,
    Context,
    ExposureState,
    Transition,
    content_types,
    exposure_from,
    increment_exposure,
)

__all__ = [
    "Action",
    "ConfigError",
    "ContentItem",
    "ContentType",
    "Context",
    "ExperimentConfig",
    "ExposureState",
    "Transition",
    "content_types",
    "dump_config",
    "exposure_from",
    "increment_exposure",
    "load_config",
    "parse_config",
    "save_config",
    "seeded_rng",
    "stable_hash",
    "substream",
]
