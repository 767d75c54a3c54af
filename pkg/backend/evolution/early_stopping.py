"""Pluggable early-stopping policies behind GetEarlyStoppingTrials."""

from __future__ import annotations

from typing import Protocol

from backend.evolution.selection import last_complete_generation
from backend.models.study import StudyConfig, Trial


class EarlyStoppingPolicy(Protocol):
    def stopping_trials(self, trials: list[Trial], config: StudyConfig) -> list[int]: ...


class NoEarlyStopping:
    """Default policy: never stops anything."""

    def stopping_trials(self, trials: list[Trial], config: StudyConfig) -> list[int]:
        return []


class StalePendingPolicy:
    """Stops pending trials that trail the last complete generation by more
    than *generations_behind* generations."""

    def __init__(self, generations_behind: int = 2) -> None:
        self.generations_behind = generations_behind

    def stopping_trials(self, trials: list[Trial], config: StudyConfig) -> list[int]:
        if not trials:
            return []
        last_complete = last_complete_generation(trials, config.population_size)
        return [
            t.trial_id for t in trials
            if t.status == "pending" and last_complete - t.generation > self.generations_behind
        ]


def policy_for(config: StudyConfig) -> EarlyStoppingPolicy:
    if config.early_stopping_policy == "stale_pending":
        return StalePendingPolicy(config.early_stopping_generations_behind)
    return NoEarlyStopping()
