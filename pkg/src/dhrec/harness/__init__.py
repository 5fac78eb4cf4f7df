from dhrec.harness.logio import InteractionLogRecord, read_log, write_log
from dhrec.harness.orchestrator import PoolResult, run_pool
from dhrec.harness.runner import (
    RunManifest,
    compare,
    evaluate_agent,
    format_comparison,
    generate_dataset,
    run_eval,
    run_training,
)

__all__ = [
    "InteractionLogRecord",
    "PoolResult",
    "RunManifest",
    "compare",
    "evaluate_agent",
    "format_comparison",
    "generate_dataset",
    "read_log",
    "run_eval",
    "run_pool",
    "run_training",
    "write_log",
]
