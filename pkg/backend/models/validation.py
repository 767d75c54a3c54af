"""Semantic validation of study configs.

Pydantic handles the document shape; this module checks the invariants that
relate fields to each other and returns them as data so callers can show every
problem at once.
"""

from __future__ import annotations

import re
from collections.abc import Callable

from pydantic import BaseModel, ConfigDict

from backend.models.search_space import assignment_violations, value_in_domain
from backend.models.study import ParameterSpec, StudyConfig

_STUDY_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


class Violation(BaseModel):
    model_config = ConfigDict(frozen=True)

    field: str
    rule: str
    message: str


def validate_study_config(config: StudyConfig) -> list[Violation]:
    violations: list[Violation] = []

    def add(field: str, rule: str, message: str) -> None:
        violations.append(Violation(field=field, rule=rule, message=message))

    if not _STUDY_ID_RE.match(config.study_id):
        add("study_id", "identifier", "study_id must be alphanumeric with _ . - separators")
    if not config.specs:
        add("specs", "non_empty", "at least one root parameter spec is required")
    if config.population_size < 1:
        add("population_size", "positive", "population_size must be >= 1")
    if config.worker_budget < 1:
        add("worker_budget", "positive", "worker_budget must be >= 1")
    if config.worker_budget > config.population_size:
        add("worker_budget", "budget_le_population", "worker_budget must not exceed population_size")
    if config.steps_per_trial < 1:
        add("steps_per_trial", "positive", "steps_per_trial must be >= 1")
    if config.opponent_window_k < 1:
        add("opponent_window_k", "positive", "opponent_window_k must be >= 1")
    if not config.objective_directions:
        add("objective_directions", "non_empty", "at least one objective direction is required")
    if not 0 <= config.seed < 2**64:
        add("seed", "uint64", "seed must fit in 64 unsigned bits")
    if config.max_generations is not None and config.max_generations < 1:
        add("max_generations", "positive", "max_generations must be >= 1 when set")
    if config.early_stopping_generations_behind < 1:
        add("early_stopping_generations_behind", "positive", "must be >= 1")

    definitions: dict[str, ParameterSpec] = {}
    root_names: set[str] = set()
    for i, spec in enumerate(config.specs):
        if spec.name in root_names:
            add(f"specs[{i}].name", "unique_root", f"root parameter '{spec.name}' declared twice")
        root_names.add(spec.name)
        _check_spec(spec, f"specs[{i}]", (), definitions, add)

    if len(config.seed_hparams) > config.population_size:
        add("seed_hparams", "within_population", "more seed assignments than population_size")
    if not violations:
        for i, assignment in enumerate(config.seed_hparams):
            for problem in assignment_violations(config.specs, assignment):
                add(f"seed_hparams[{i}]", "valid_assignment", problem)

    if config.replay is not None:
        if not config.replay.entries:
            add("replay.entries", "non_empty", "a replay plan needs at least one entry")
        seen: set[int] = set()
        for i, entry in enumerate(config.replay.entries):
            parent = entry.source_parent_trial_id
            if parent is not None and parent not in seen:
                add(
                    f"replay.entries[{i}]", "parent_first",
                    f"entry {entry.source_trial_id} precedes its parent {parent}",
                )
            if entry.source_trial_id in seen:
                add(f"replay.entries[{i}]", "unique", f"trial {entry.source_trial_id} listed twice")
            seen.add(entry.source_trial_id)

    return violations


def _check_spec(
    spec: ParameterSpec,
    path: str,
    ancestors: tuple[str, ...],
    definitions: dict[str, ParameterSpec],
    add: Callable[[str, str, str], None],
) -> None:
    if spec.name in ancestors:
        cycle = " -> ".join((*ancestors[ancestors.index(spec.name):], spec.name))
        add(f"{path}.name", "acyclic", f"parameter DAG has a cycle: {cycle}")
        return

    seen = definitions.get(spec.name)
    if seen is not None and seen != spec:
        add(f"{path}.name", "consistent_definition",
            f"parameter '{spec.name}' is defined twice with different specs")
    definitions[spec.name] = spec

    if spec.kind in ("integer", "float"):
        if spec.bounds is None:
            add(f"{path}.bounds", "required", f"{spec.kind} parameter needs bounds")
        else:
            lo, hi = spec.bounds
            if not lo < hi:
                add(f"{path}.bounds", "min_lt_max", f"bounds [{lo}, {hi}] need min < max")
            if spec.kind == "integer" and (lo != int(lo) or hi != int(hi)):
                add(f"{path}.bounds", "integral", "integer bounds must be whole numbers")
            if spec.scale == "log" and lo <= 0:
                add(f"{path}.scale", "log_positive", "log scale requires min > 0")
        if spec.kind == "integer" and spec.scale == "log":
            add(f"{path}.scale", "float_only", "log scale applies to float parameters only")
    else:
        values = spec.feasible_values or []
        if not values:
            add(f"{path}.feasible_values", "required", f"{spec.kind} parameter needs feasible_values")
        elif spec.kind == "discrete":
            if any(isinstance(v, str) for v in values):
                add(f"{path}.feasible_values", "numeric", "discrete values must be numeric")
            elif any(float(a) >= float(b) for a, b in zip(values, values[1:])):
                add(f"{path}.feasible_values", "strictly_increasing",
                    "discrete values must be strictly increasing")
        elif len(set(values)) != len(values):
            add(f"{path}.feasible_values", "unique", "categorical values must be unique")

    for j, child in enumerate(spec.children):
        child_path = f"{path}.children[{j}]"
        if spec.kind == "float":
            add(f"{child_path}.guard_value", "guardable_parent",
                "float parameters cannot guard children")
        elif not value_in_domain(spec, child.guard_value):
            add(f"{child_path}.guard_value", "feasible_guard",
                f"guard {child.guard_value!r} is not a value of '{spec.name}'")
        _check_spec(child.spec, f"{child_path}.spec", (*ancestors, spec.name), definitions, add)
