"""Experiment plans: what a bench run trains and how much resource it may use.

A plan becomes a StudyConfig:

  * pbt:    lr searched on a log range, evolution until the budget is spent;
  * grid:   one generation-0 trial per listed lr, each trained for its share
             of the budget, no reproduction;
  * random: population_size sampled lrs, each trained for its share of the
             budget, no reproduction (PBT with unbounded trial length).
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from backend.models.study import OpponentStrategy, ParameterSpec, StudyConfig
from backend.worker.problems import ToyProblemSpec

Method = Literal["pbt", "grid", "random"]


class PlanValidationError(ValueError):
    """A plan, or a set of plans, cannot be run as requested."""


class InvalidCutError(ValueError):
    """A continuation cut lies outside the measured resource range."""


class ExperimentPlan(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    method: Method = "pbt"
    population_size: int = Field(5, gt=0)
    worker_budget: int = Field(5, gt=0)
    steps_per_trial: int = Field(1000, gt=0)
    total_resource_budget: int = Field(50_000, ge=0)
    repeats: int = Field(1, gt=0)
    seeds: list[int] = Field(default_factory=list)
    opponent_strategy: OpponentStrategy = "past_generation"
    opponent_window_k: int = Field(2, gt=0)
    problem: ToyProblemSpec = Field(default_factory=ToyProblemSpec)
    lr_range: tuple[float, float] = (1e-5, 1e-1)
    grid_values: list[float] | None = None
    # Log-normal sigma of per-worker step-time multipliers; 0 = homogeneous.
    heterogeneity: float = Field(0.0, ge=0.0)
    trial_overhead: float = Field(0.0, ge=0.0)

    @model_validator(mode="after")
    def _method_fields(self) -> ExperimentPlan:
        if self.method == "grid" and not self.grid_values:
            raise ValueError("grid plans need grid_values")
        if self.method != "grid" and not 0 < self.lr_range[0] < self.lr_range[1]:
            raise ValueError("lr_range must satisfy 0 < low < high")
        return self

    def run_seeds(self) -> list[int]:
        return list(self.seeds) if self.seeds else list(range(self.repeats))

    @property
    def workers(self) -> int:
        if self.method == "grid":
            assert self.grid_values is not None
            return min(self.worker_budget, len(self.grid_values))
        return min(self.worker_budget, self.population_size)

    def arm_steps(self) -> int:
        """Steps per trial for the non-evolving methods: an equal budget share,
        rounded down to whole evaluation windows."""
        arms = len(self.grid_values or []) if self.method == "grid" else self.population_size
        share = self.total_resource_budget // max(1, arms)
        return share // self.problem.eval_every * self.problem.eval_every

    def study_config(self, study_id: str, seed: int) -> StudyConfig:
        lo, hi = self.lr_range
        if self.method == "grid":
            values = sorted(self.grid_values or [])
            return StudyConfig(
                study_id=study_id,
                specs=[ParameterSpec(name="lr", kind="discrete", feasible_values=values)],
                population_size=len(values),
                worker_budget=self.workers,
                steps_per_trial=self.arm_steps(),
                max_generations=1,
                seed_hparams=[{"lr": v} for v in values],
                seed=seed,
            )
        if self.method == "random":
            return StudyConfig(
                study_id=study_id,
                specs=[ParameterSpec(name="lr", kind="float", bounds=(lo, hi), scale="log")],
                population_size=self.population_size,
                worker_budget=self.workers,
                steps_per_trial=self.arm_steps(),
                max_generations=1,
                seed=seed,
            )
        return StudyConfig(
            study_id=study_id,
            specs=[ParameterSpec(name="lr", kind="float", bounds=(lo, hi), scale="log")],
            population_size=self.population_size,
            worker_budget=self.workers,
            steps_per_trial=self.steps_per_trial,
            opponent_strategy=self.opponent_strategy,
            opponent_window_k=self.opponent_window_k,
            seed=seed,
        )


def check_comparable(plans: list[ExperimentPlan]) -> None:
    """Plans compared against each other must share problem and budget."""
    if not plans:
        return
    first = plans[0]
    for plan in plans[1:]:
        if plan.total_resource_budget != first.total_resource_budget:
            raise PlanValidationError(
                f"plan {plan.name!r} budget {plan.total_resource_budget} differs from "
                f"{first.name!r} budget {first.total_resource_budget}",
            )
        if plan.problem != first.problem:
            raise PlanValidationError(f"plan {plan.name!r} uses a different problem")
    names = [p.name for p in plans]
    if len(set(names)) != len(names):
        raise PlanValidationError("plan names must be unique")


# ── Suite file ────────────────────────────────────────────────────────

class ContinueSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    plan: str
    cut_resource: int = Field(gt=0)
    extra_steps: int = Field(gt=0)


class SensitivitySpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    plans: list[str]
    repeats: int = 5
    levels: int = Field(10, gt=0)


class ScalabilitySpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    populations: list[int] = Field(default_factory=lambda: [5, 20])
    workers: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    fit_population: int = 20
    steps_per_trial: int = 200
    generations: int = 3
    problem: ToyProblemSpec = Field(default_factory=lambda: ToyProblemSpec(eval_every=100))


class AblationSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    plan: str
    # Worker speed spread applied to the ablation runs; the comparison plans stay as written.
    heterogeneity: float = Field(0.5, ge=0.0)
    strategies: list[OpponentStrategy] = Field(
        default_factory=lambda: ["past_generation", "same_generation", "any_generation"],
    )


class ReplayStabilitySpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    plan: str
    repeats: int = Field(5, gt=1)


class BenchSuite(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    comparison: list[ExperimentPlan] = Field(default_factory=list)
    continue_training: ContinueSpec | None = None
    schedule_plan: str | None = None
    sensitivity: SensitivitySpec | None = None
    scalability: ScalabilitySpec | None = None
    ablation: AblationSpec | None = None
    replay_stability: ReplayStabilitySpec | None = None

    def plan(self, name: str) -> ExperimentPlan:
        for p in self.comparison:
            if p.name == name:
                return p
        raise PlanValidationError(f"no comparison plan named {name!r}")
