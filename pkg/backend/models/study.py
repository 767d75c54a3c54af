"""Study, parameter search space, trial and measurement data model.

Every other package speaks in these types. They are frozen pydantic models, so
they serialize to the same JSON on the wire, in the study log and in config
files, and they can be shared between threads without coordination.
"""

from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from backend.config import DEFAULT_OPPONENT_WINDOW

ParameterKind = Literal["integer", "float", "discrete", "categorical"]
Scale = Literal["linear", "log"]
FitnessMode = Literal["priority", "dominance"]
Direction = Literal["minimize", "maximize"]
OpponentStrategy = Literal["past_generation", "same_generation", "any_generation"]
TrialStatus = Literal["pending", "completed", "stopped"]
MutationBoundary = Literal["clamp", "redraw"]
EarlyStoppingKind = Literal["none", "stale_pending"]

HParamValue = int | float | str
HParams = dict[str, HParamValue]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ── Search space ──────────────────────────────────────────────────────

class ChildSpec(_Frozen):
    """Edge of the parameter DAG: *spec* is active while the parent parameter
    equals *guard_value*."""

    guard_value: int | float | str
    spec: ParameterSpec


class ParameterSpec(_Frozen):
    name: str
    kind: ParameterKind
    bounds: tuple[float, float] | None = None
    scale: Scale = "linear"
    feasible_values: list[int | float | str] | None = None
    mutable: bool = True
    children: list[ChildSpec] = Field(default_factory=list)

    def lower(self) -> float:
        assert self.bounds is not None
        return self.bounds[0]

    def upper(self) -> float:
        assert self.bounds is not None
        return self.bounds[1]


ChildSpec.model_rebuild()


# ── Replay ────────────────────────────────────────────────────────────

class ReplayEntry(_Frozen):
    source_trial_id: int
    source_parent_trial_id: int | None = None
    generation: int = 0
    hparams: HParams


class ReplayPlan(_Frozen):
    """Execution-ordered copy of a source study's lineage."""

    source_study_id: str
    targets: list[int]
    entries: list[ReplayEntry]
    reseed: bool = False


# ── Study ─────────────────────────────────────────────────────────────

class StudyConfig(_Frozen):
    study_id: str
    specs: list[ParameterSpec]
    population_size: int
    worker_budget: int
    steps_per_trial: int
    fitness_mode: FitnessMode = "priority"
    objective_directions: list[Direction] = Field(default_factory=lambda: ["minimize"])
    opponent_strategy: OpponentStrategy = "past_generation"
    opponent_window_k: int = DEFAULT_OPPONENT_WINDOW
    seed: int = 0
    max_generations: int | None = None
    seed_hparams: list[HParams] = Field(default_factory=list)
    weak_dominance: bool = False
    mutation_boundary: MutationBoundary = "clamp"
    early_stopping_policy: EarlyStoppingKind = "none"
    early_stopping_generations_behind: int = 2
    replay: ReplayPlan | None = None

    @property
    def budget_mode(self) -> bool:
        return self.worker_budget < self.population_size


# ── Trials ────────────────────────────────────────────────────────────

class Measurement(_Frozen):
    step: int = Field(ge=0)
    objectives: tuple[float | None, ...]
    checkpoint_path: str

    @field_validator("objectives")
    @classmethod
    def validate_objectives(cls, v: tuple[float | None, ...]) -> tuple[float | None, ...]:
        for value in v:
            if value is not None and not math.isfinite(value):
                raise ValueError("objective values must be finite (use null for missing)")
        return v


class Trial(_Frozen):
    trial_id: int
    study_id: str
    hparams: HParams
    warm_start_checkpoint_path: str | None = None
    parent_trial_id: int | None = None
    initiator_parent_trial_id: int | None = None
    generation: int = 0
    status: TrialStatus = "pending"
    measurements: tuple[Measurement, ...] = ()
    final_checkpoint_path: str | None = None
    initiated_reproduction: bool = False
    completion_index: int | None = None
    worker_id: str | None = None
    source_trial_id: int | None = None

    @property
    def last_objectives(self) -> tuple[float | None, ...] | None:
        if not self.measurements:
            return None
        return self.measurements[-1].objectives

    @property
    def order_key(self) -> tuple[int, int, int]:
        """Age ordering: generation, then completion index, then trial id."""
        completion = self.completion_index if self.completion_index is not None else 1 << 62
        return (self.generation, completion, self.trial_id)


class Fitness(_Frozen):
    values: tuple[float | None, ...]
    directions: tuple[Direction, ...]

    @classmethod
    def of_trial(cls, trial: Trial, directions: list[Direction]) -> Fitness:
        """Fitness is the objective tuple of the trial's last measurement."""
        values = trial.last_objectives
        if values is None:
            raise ValueError(f"trial {trial.trial_id} has no measurements")
        return cls(values=values, directions=tuple(directions))
