from backend.lifecycle.dependency import (
    DependencyGraph,
    IncompleteLineageError,
    InvalidTargetError,
    extract_dependency_graph,
)
from backend.lifecycle.gc import CheckpointCollector, DeletionReport, garbage_collect
from backend.lifecycle.replay import build_replay_plan, replay, replay_config

__all__ = [
    "CheckpointCollector",
    "DeletionReport",
    "DependencyGraph",
    "IncompleteLineageError",
    "InvalidTargetError",
    "build_replay_plan",
    "extract_dependency_graph",
    "garbage_collect",
    "replay",
    "replay_config",
]
