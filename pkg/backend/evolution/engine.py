"""EvolutionEngine: initiator-based trial suggestion.

The engine is a pure function of (trial history, random generator): it holds
no mutable state and never touches storage. The service owns persistence and
serializes calls per study.

Suggestion rule:
  * while the seed generation is incomplete, fill its population_size slots
    with sampled (or explicitly listed) assignments, else defer;
  * otherwise the oldest uninitiated completed trial initiates: it meets one
    opponent from its window in a binary tournament, and the winner's
    hyperparameters are mutated into a child that warm-starts from the
    winner's final checkpoint;
  * in budget mode the initiator waits until its own generation has
    population_size completed members.
"""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict

from backend.evolution.early_stopping import EarlyStoppingPolicy, policy_for
from backend.evolution.mutation import mutate
from backend.evolution.selection import (
    binary_tournament,
    completed_per_generation,
    get_oldest_uninitiated,
    last_complete_generation,
    select_opponents,
)
from backend.models.sampling import sample_hparams
from backend.models.study import HParams, StudyConfig, Trial

logger = logging.getLogger("pbt.evolution")


class TournamentRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    initiator_id: int
    opponent_id: int | None = None
    winner_id: int


class SuggestionDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    child: Trial
    tournament_record: TournamentRecord | None = None


class Defer(BaseModel):
    model_config = ConfigDict(frozen=True)

    reason: str
    study_complete: bool = False


Suggestion = SuggestionDecision | Defer


class EvolutionEngine:
    """Suggests new trials for one study."""

    def __init__(
        self,
        config: StudyConfig,
        early_stopping: EarlyStoppingPolicy | None = None,
    ) -> None:
        self._config = config
        self._early_stopping = early_stopping or policy_for(config)

    @property
    def config(self) -> StudyConfig:
        return self._config

    # ------------------------------------------------------------------
    # Suggestions
    # ------------------------------------------------------------------

    def get_new_suggestion(self, trials: list[Trial], rng: np.random.Generator) -> Suggestion:
        if self._config.replay is not None:
            return self._suggest_replay(trials)

        cfg = self._config
        if last_complete_generation(trials, cfg.population_size) < 0:
            live_seeds = [t for t in trials if t.generation == 0 and t.status != "stopped"]
            if len(live_seeds) < cfg.population_size:
                return SuggestionDecision(child=self._seed_trial(trials, live_seeds, rng))
            return Defer(reason="seed_generation_running")

        initiator = get_oldest_uninitiated(trials, cfg.max_generations)
        if initiator is None:
            pending = any(t.status == "pending" for t in trials)
            if pending:
                return Defer(reason="no_initiator")
            return Defer(reason="study_complete", study_complete=True)

        if cfg.budget_mode:
            filled = completed_per_generation(trials)[initiator.generation]
            if filled < cfg.population_size:
                return Defer(reason="generation_filling")

        opponents = select_opponents(
            initiator, trials, cfg.opponent_strategy, cfg.opponent_window_k,
        )
        if cfg.max_generations is not None:
            opponents = [t for t in opponents if t.generation < cfg.max_generations - 1]

        winner, opponent = binary_tournament(
            initiator,
            opponents,
            cfg.fitness_mode,
            cfg.objective_directions,
            rng,
            weak_dominance=cfg.weak_dominance,
        )
        child = Trial(
            trial_id=_next_trial_id(trials),
            study_id=cfg.study_id,
            hparams=mutate(winner.hparams, cfg.specs, rng, cfg.mutation_boundary),
            warm_start_checkpoint_path=winner.final_checkpoint_path,
            parent_trial_id=winner.trial_id,
            initiator_parent_trial_id=initiator.trial_id,
            generation=winner.generation + 1,
        )
        record = TournamentRecord(
            initiator_id=initiator.trial_id,
            opponent_id=opponent.trial_id if opponent is not None else None,
            winner_id=winner.trial_id,
        )
        logger.debug(
            "Trial %d initiates: opponent=%s winner=%d child=%d (gen %d)",
            initiator.trial_id, record.opponent_id, winner.trial_id,
            child.trial_id, child.generation,
        )
        return SuggestionDecision(child=child, tournament_record=record)

    def suggest_batch(
        self, trials: list[Trial], k: int, rng: np.random.Generator,
    ) -> list[SuggestionDecision]:
        """Up to k suggestions, each applied to the history before the next."""
        history = list(trials)
        decisions: list[SuggestionDecision] = []
        for _ in range(k):
            suggestion = self.get_new_suggestion(history, rng)
            if isinstance(suggestion, Defer):
                break
            decisions.append(suggestion)
            history = apply_decision(history, suggestion)
        return decisions

    def get_early_stopping_trials(self, trials: list[Trial]) -> list[int]:
        return self._early_stopping.stopping_trials(trials, self._config)

    # ------------------------------------------------------------------
    # Internals
    # ------------------------------------------------------------------

    def _seed_trial(
        self, trials: list[Trial], live_seeds: list[Trial], rng: np.random.Generator,
    ) -> Trial:
        remaining = list(self._config.seed_hparams)
        for trial in live_seeds:
            if trial.hparams in remaining:
                remaining.remove(trial.hparams)
        hparams: HParams = dict(remaining[0]) if remaining else sample_hparams(self._config.specs, rng)
        return Trial(
            trial_id=_next_trial_id(trials),
            study_id=self._config.study_id,
            hparams=hparams,
            generation=0,
        )

    def _suggest_replay(self, trials: list[Trial]) -> Suggestion:
        plan = self._config.replay
        assert plan is not None
        counterparts = {
            t.source_trial_id: t for t in trials
            if t.status != "stopped" and t.source_trial_id is not None
        }
        for entry in plan.entries:
            if entry.source_trial_id in counterparts:
                continue
            parent: Trial | None = None
            if entry.source_parent_trial_id is not None:
                parent = counterparts.get(entry.source_parent_trial_id)
                if parent is None or parent.status != "completed":
                    continue
            child = Trial(
                trial_id=_next_trial_id(trials),
                study_id=self._config.study_id,
                hparams=dict(entry.hparams),
                warm_start_checkpoint_path=parent.final_checkpoint_path if parent else None,
                parent_trial_id=parent.trial_id if parent else None,
                generation=parent.generation + 1 if parent else 0,
                source_trial_id=entry.source_trial_id,
            )
            return SuggestionDecision(child=child)

        done = len(plan.entries) == sum(1 for t in counterparts.values() if t.status == "completed")
        if done:
            return Defer(reason="study_complete", study_complete=True)
        return Defer(reason="replay_waiting_on_parent")


def get_new_suggestion(
    trials: list[Trial], config: StudyConfig, rng: np.random.Generator,
) -> Suggestion:
    return EvolutionEngine(config).get_new_suggestion(trials, rng)


def apply_decision(trials: list[Trial], decision: SuggestionDecision) -> list[Trial]:
    """History after *decision*: the child appended and its initiator marked."""
    record = decision.tournament_record
    updated = [
        t.model_copy(update={"initiated_reproduction": True})
        if record is not None and t.trial_id == record.initiator_id else t
        for t in trials
    ]
    updated.append(decision.child)
    return updated


def _next_trial_id(trials: list[Trial]) -> int:
    return max((t.trial_id for t in trials), default=0) + 1
