from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from backend.evolution.early_stopping import NoEarlyStopping, StalePendingPolicy
from backend.evolution.engine import Defer, EvolutionEngine, SuggestionDecision, apply_decision
from backend.evolution.mutation import mutate, mutate_value
from backend.evolution.selection import (
    binary_tournament,
    get_oldest_uninitiated,
    last_complete_generation,
    select_opponents,
)
from backend.models.sampling import sample_value
from backend.models.search_space import assignment_violations
from backend.models.study import (
    ChildSpec,
    Measurement,
    ParameterSpec,
    ReplayEntry,
    ReplayPlan,
    Trial,
)
from tests.conftest import LR_SPEC, make_config, make_trial


def _rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


def _complete(trial: Trial, objective: float, index: int) -> Trial:
    return trial.model_copy(update={
        "status": "completed",
        "measurements": (
            Measurement(step=200, objectives=(objective,), checkpoint_path=f"ck/{trial.trial_id}"),
        ),
        "final_checkpoint_path": f"ck/{trial.trial_id}",
        "completion_index": index,
    })


# ── Seeding ───────────────────────────────────────────────────────────

def test_seed_generation_fills_then_defers():
    engine = EvolutionEngine(make_config())
    decisions = engine.suggest_batch([], 10, _rng())
    assert [d.child.trial_id for d in decisions] == [1, 2, 3, 4]
    assert all(d.child.generation == 0 and d.tournament_record is None for d in decisions)

    history = [d.child for d in decisions]
    deferred = engine.get_new_suggestion(history, _rng())
    assert isinstance(deferred, Defer)
    assert deferred.reason == "seed_generation_running"
    assert not deferred.study_complete


def test_seed_hparams_used_before_sampling():
    config = make_config(seed_hparams=[{"lr": 0.5}, {"lr": 0.25}])
    decisions = EvolutionEngine(config).suggest_batch([], 4, _rng())
    assert [d.child.hparams for d in decisions[:2]] == [{"lr": 0.5}, {"lr": 0.25}]
    assert all(1e-3 <= d.child.hparams["lr"] <= 1.0 for d in decisions[2:])


def test_stopped_seed_is_replaced():
    trials = [make_trial(i) for i in (1, 2, 3)] + [make_trial(4, status="stopped")]
    suggestion = EvolutionEngine(make_config()).get_new_suggestion(trials, _rng())
    assert isinstance(suggestion, SuggestionDecision)
    assert suggestion.child.trial_id == 5
    assert suggestion.child.generation == 0


# ── Reproduction ──────────────────────────────────────────────────────

def test_oldest_completed_trial_initiates():
    trials = [
        make_trial(1, completion_index=2),
        make_trial(2, completion_index=0),
        make_trial(3, completion_index=1),
        make_trial(4, completion_index=3),
    ]
    assert get_oldest_uninitiated(trials).trial_id == 2
    suggestion = EvolutionEngine(make_config()).get_new_suggestion(trials, _rng())
    assert isinstance(suggestion, SuggestionDecision)
    assert suggestion.tournament_record.initiator_id == 2
    assert suggestion.child.initiator_parent_trial_id == 2
    assert suggestion.child.trial_id == 5


def test_better_opponent_wins_and_child_warm_starts_from_it():
    trials = [make_trial(1, objective=5.0)] + [make_trial(i, objective=1.0) for i in (2, 3, 4)]
    for seed in range(10):
        suggestion = EvolutionEngine(make_config()).get_new_suggestion(trials, _rng(seed))
        record = suggestion.tournament_record
        assert record.initiator_id == 1
        assert record.winner_id == record.opponent_id
        assert suggestion.child.parent_trial_id == record.winner_id
        assert suggestion.child.warm_start_checkpoint_path == f"ck/{record.winner_id}"
        assert suggestion.child.generation == 1


def test_tie_goes_to_initiator():
    initiator = make_trial(1, objective=1.0)
    opponents = [make_trial(2, objective=1.0)]
    winner, opponent = binary_tournament(initiator, opponents, "priority", ["minimize"], _rng())
    assert winner is initiator
    assert opponent is opponents[0]


def test_no_opponents_initiator_wins_by_default():
    initiator = make_trial(1)
    winner, opponent = binary_tournament(initiator, [], "priority", ["minimize"], _rng())
    assert winner is initiator and opponent is None


def test_budget_mode_waits_for_generation():
    trials = [make_trial(i, initiated_reproduction=True) for i in (1, 2, 3, 4)]
    trials.append(make_trial(5, generation=1, completion_index=5, initiator_parent_trial_id=1))
    trials += [
        make_trial(i, generation=1, status="pending", objective=None, initiator_parent_trial_id=i - 4)
        for i in (6, 7, 8)
    ]

    gated = EvolutionEngine(make_config(worker_budget=2)).get_new_suggestion(trials, _rng())
    assert isinstance(gated, Defer) and gated.reason == "generation_filling"

    free = EvolutionEngine(make_config(worker_budget=4)).get_new_suggestion(trials, _rng())
    assert isinstance(free, SuggestionDecision)
    assert free.tournament_record.initiator_id == 5


def test_no_initiator_while_children_pending():
    trials = [make_trial(i, initiated_reproduction=True) for i in (1, 2, 3, 4)]
    trials.append(make_trial(5, generation=1, status="pending", objective=None))
    suggestion = EvolutionEngine(make_config()).get_new_suggestion(trials, _rng())
    assert isinstance(suggestion, Defer)
    assert suggestion.reason == "no_initiator" and not suggestion.study_complete


def test_max_generations_completes_study():
    trials = [make_trial(i) for i in (1, 2, 3, 4)]
    suggestion = EvolutionEngine(make_config(max_generations=1)).get_new_suggestion(trials, _rng())
    assert isinstance(suggestion, Defer) and suggestion.study_complete


def test_suggest_batch_marks_initiators():
    trials = [make_trial(i) for i in (1, 2, 3, 4)]
    decisions = EvolutionEngine(make_config()).suggest_batch(trials, 10, _rng())
    assert [d.tournament_record.initiator_id for d in decisions] == [1, 2, 3, 4]
    assert [d.child.trial_id for d in decisions] == [5, 6, 7, 8]

    history = trials
    for decision in decisions:
        history = apply_decision(history, decision)
    assert all(t.initiated_reproduction for t in history if t.generation == 0)


def test_scripted_run_fills_every_generation():
    config = make_config(opponent_strategy="same_generation", max_generations=3)
    engine = EvolutionEngine(config)
    rng = _rng(3)
    trials: list[Trial] = []
    completions = 0
    while True:
        suggestion = engine.get_new_suggestion(trials, rng)
        if isinstance(suggestion, Defer):
            if suggestion.study_complete:
                break
            oldest = min((t for t in trials if t.status == "pending"), key=lambda t: t.trial_id)
            objective = abs(math.log10(float(oldest.hparams["lr"])) + 1.0)
            trials = [_complete(t, objective, completions) if t is oldest else t for t in trials]
            completions += 1
            continue
        trials = apply_decision(trials, suggestion)

    assert Counter(t.generation for t in trials) == {0: 4, 1: 4, 2: 4}
    assert all(t.status == "completed" for t in trials)
    assert last_complete_generation(trials, 4) == 2
    by_id = {t.trial_id: t for t in trials}
    for t in trials:
        assert 1e-3 <= t.hparams["lr"] <= 1.0
        if t.generation > 0:
            parent = by_id[t.parent_trial_id]
            assert t.warm_start_checkpoint_path == parent.final_checkpoint_path
            assert t.generation == parent.generation + 1


def test_suggestions_are_deterministic():
    trials = [make_trial(i, objective=float(i)) for i in (1, 2, 3, 4)]
    a = EvolutionEngine(make_config()).suggest_batch(trials, 4, _rng(11))
    b = EvolutionEngine(make_config()).suggest_batch(trials, 4, _rng(11))
    assert a == b


# ── Opponent window ───────────────────────────────────────────────────

def test_opponent_strategies():
    trials = [make_trial(i, generation=g) for i, g in enumerate([0, 0, 1, 1, 2, 2, 3, 3], start=1)]
    trials.append(make_trial(9, generation=3, status="pending", objective=None))
    initiator = trials[6]

    past = select_opponents(initiator, trials, "past_generation", 2)
    assert [t.trial_id for t in past] == [5, 6, 8]
    same = select_opponents(initiator, trials, "same_generation", 2)
    assert [t.trial_id for t in same] == [8]
    anything = select_opponents(initiator, trials, "any_generation", 2)
    assert [t.trial_id for t in anything] == [1, 2, 3, 4, 5, 6, 8]


# ── Mutation ──────────────────────────────────────────────────────────

def test_float_mutation_scales_and_clamps():
    for seed in range(20):
        value = mutate_value(LR_SPEC, 0.1, _rng(seed))
        assert value == pytest.approx(0.08) or value == pytest.approx(0.12)
        clamped = mutate_value(LR_SPEC, 1.0, _rng(seed))
        assert clamped == pytest.approx(0.8) or clamped == 1.0


def test_float_mutation_redraw_stays_inside():
    for seed in range(20):
        assert mutate_value(LR_SPEC, 1.0, _rng(seed), "redraw") == pytest.approx(0.8)


def test_discrete_and_integer_step_to_neighbours():
    batch = ParameterSpec(name="bs", kind="discrete", feasible_values=[16, 32, 64])
    layers = ParameterSpec(name="layers", kind="integer", bounds=(1, 3))
    for seed in range(20):
        assert mutate_value(batch, 32, _rng(seed)) in (16, 64)
        assert mutate_value(batch, 16, _rng(seed)) in (16, 32)
        assert mutate_value(layers, 3, _rng(seed)) in (2, 3)


def test_immutable_parameter_passes_through():
    frozen = ParameterSpec(name="lr", kind="float", bounds=(1e-3, 1.0), mutable=False)
    assert mutate({"lr": 0.1}, [frozen], _rng()) == {"lr": 0.1}


def test_mutation_keeps_guarded_children_consistent():
    optimizer = ParameterSpec(
        name="optimizer",
        kind="categorical",
        feasible_values=["sgd", "momentum"],
        children=[ChildSpec(
            guard_value="momentum",
            spec=ParameterSpec(name="momentum", kind="float", bounds=(0.5, 0.99)),
        )],
    )
    specs = [LR_SPEC, optimizer]
    for seed in range(30):
        child = mutate({"lr": 0.1, "optimizer": "momentum", "momentum": 0.9}, specs, _rng(seed))
        assert assignment_violations(specs, child) == []


# ── Early stopping ────────────────────────────────────────────────────

def test_stale_pending_policy():
    config = make_config(population_size=1, worker_budget=1)
    trials = [make_trial(i + 1, generation=i) for i in range(4)]
    trials += [
        make_trial(10, generation=0, status="pending", objective=None),
        make_trial(11, generation=2, status="pending", objective=None),
    ]
    assert StalePendingPolicy(1).stopping_trials(trials, config) == [10]
    assert NoEarlyStopping().stopping_trials(trials, config) == []


def test_engine_uses_configured_policy():
    config = make_config(
        population_size=1, worker_budget=1,
        early_stopping_policy="stale_pending", early_stopping_generations_behind=1,
    )
    trials = [make_trial(i + 1, generation=i) for i in range(4)]
    trials.append(make_trial(10, generation=0, status="pending", objective=None))
    assert EvolutionEngine(config).get_early_stopping_trials(trials) == [10]


# ── Replay ────────────────────────────────────────────────────────────

def _replay_config():
    plan = ReplayPlan(
        source_study_id="src",
        targets=[7],
        entries=[
            ReplayEntry(source_trial_id=3, hparams={"lr": 0.1}),
            ReplayEntry(source_trial_id=7, source_parent_trial_id=3, generation=1,
                        hparams={"lr": 0.12}),
        ],
    )
    return make_config(replay=plan)


def test_replay_follows_plan_order():
    engine = EvolutionEngine(_replay_config())

    first = engine.get_new_suggestion([], _rng())
    assert first.child.source_trial_id == 3
    assert first.child.warm_start_checkpoint_path is None

    pending = [first.child]
    waiting = engine.get_new_suggestion(pending, _rng())
    assert isinstance(waiting, Defer) and waiting.reason == "replay_waiting_on_parent"

    done = [_complete(first.child, 1.0, 0)]
    second = engine.get_new_suggestion(done, _rng())
    assert second.child.source_trial_id == 7
    assert second.child.parent_trial_id == first.child.trial_id
    assert second.child.warm_start_checkpoint_path == f"ck/{first.child.trial_id}"
    assert second.child.hparams == {"lr": 0.12}
    assert second.child.generation == 1

    finished = engine.get_new_suggestion([*done, _complete(second.child, 0.5, 1)], _rng())
    assert isinstance(finished, Defer) and finished.study_complete


# ── Randomized properties ─────────────────────────────────────────────

def test_opponent_draw_is_uniform():
    initiator = make_trial(1, generation=3, objective=0.5)
    opponents = [make_trial(i, generation=3, objective=1.0) for i in (2, 3, 4)]
    rng = _rng(17)
    draws = 30_000
    counts = Counter(
        binary_tournament(initiator, opponents, "priority", ["minimize"], rng)[1].trial_id
        for _ in range(draws)
    )
    for trial_id in (2, 3, 4):
        assert abs(counts[trial_id] / draws - 1 / 3) < 0.02


def test_randomized_mutations_stay_on_the_lattice():
    rng = _rng(23)
    batch = ParameterSpec(name="bs", kind="discrete", feasible_values=[16, 32, 64, 128])
    values = [16, 32, 64, 128]
    for _ in range(10_000):
        parent = sample_value(LR_SPEC, rng)
        boundary = "redraw" if rng.integers(2) else "clamp"
        child = mutate_value(LR_SPEC, parent, rng, boundary)
        assert 1e-3 <= child <= 1.0
        allowed = [min(max(parent * f, 1e-3), 1.0) for f in (0.8, 1.2)]
        assert any(child == pytest.approx(a, rel=1e-12) for a in allowed), (parent, child)

        index = int(rng.integers(len(values)))
        moved = values.index(mutate_value(batch, values[index], rng))
        assert abs(moved - index) <= 1
        if 0 < index < len(values) - 1:
            assert moved != index


def test_randomized_opponent_windows():
    rng = _rng(29)
    strategies = ["past_generation", "same_generation", "any_generation"]
    for _ in range(10_000):
        trials = []
        for trial_id in range(1, int(rng.integers(2, 8)) + 1):
            completed = rng.random() < 0.8
            trials.append(make_trial(
                trial_id,
                generation=int(rng.integers(5)),
                status="completed" if completed else "pending",
                objective=1.0 if completed else None,
            ))
        completed = [t for t in trials if t.status == "completed"]
        if not completed:
            continue
        initiator = completed[int(rng.integers(len(completed)))]
        strategy = strategies[int(rng.integers(3))]
        k = int(rng.integers(1, 4))
        g = initiator.generation
        low = g if strategy == "same_generation" else g - k + 1

        chosen = select_opponents(initiator, trials, strategy, k)
        expected = [
            t.trial_id for t in completed
            if t.trial_id != initiator.trial_id
            and (strategy == "any_generation" or low <= t.generation <= g)
        ]
        assert [t.trial_id for t in chosen] == sorted(expected)


# ── Conformance against a step-by-step model ──────────────────────────

class _ReferencePBT:
    """Step-by-step model of the reproduction loop over plain dicts."""

    def __init__(self, population: int, budget: int, max_generations: int, k: int, seed) -> None:
        self.population = population
        self.budget_mode = budget < population
        self.max_generations = max_generations
        self.k = k
        self.rng = np.random.default_rng(seed)
        self.trials: dict[int, dict] = {}

    def suggest(self) -> dict | str:
        completed = [t for t in self.trials.values() if t["status"] == "completed"]
        if sum(t["generation"] == 0 for t in completed) < self.population:
            live = [t for t in self.trials.values() if t["generation"] == 0]
            if len(live) >= self.population:
                return "seed_generation_running"
            return self._add(0, None, None, sample_value(LR_SPEC, self.rng))

        last = self.max_generations - 1
        eligible = [t for t in completed if not t["initiated"] and t["generation"] < last]
        if not eligible:
            if any(t["status"] == "pending" for t in self.trials.values()):
                return "no_initiator"
            return "study_complete"
        initiator = min(eligible, key=lambda t: (t["generation"], t["completion"], t["id"]))
        g = initiator["generation"]
        if self.budget_mode and sum(t["generation"] == g for t in completed) < self.population:
            return "generation_filling"

        opponents = sorted(
            (
                t for t in completed
                if t["id"] != initiator["id"] and g - self.k + 1 <= t["generation"] <= g
                and t["generation"] < last
            ),
            key=lambda t: t["id"],
        )
        winner = initiator
        if opponents:
            opponent = opponents[int(self.rng.integers(len(opponents)))]
            if opponent["objective"] < initiator["objective"]:
                winner = opponent
        initiator["initiated"] = True
        lr = mutate_value(LR_SPEC, winner["lr"], self.rng)
        return self._add(winner["generation"] + 1, winner["id"], initiator["id"], lr)

    def complete(self, trial_id: int, objective: float, index: int) -> None:
        self.trials[trial_id].update(status="completed", objective=objective, completion=index)

    def _add(self, generation: int, parent: int | None, initiator: int | None, lr) -> dict:
        child = {
            "id": max(self.trials, default=0) + 1, "generation": generation, "parent": parent,
            "initiator": initiator, "lr": lr, "status": "pending", "initiated": False,
            "completion": None, "objective": None,
        }
        self.trials[child["id"]] = child
        return child


def _conforms_to_reference(seed: int) -> None:
    script = _rng(seed)
    budget = int(script.choice([1, 3, 5]))
    config = make_config(population_size=5, worker_budget=budget, max_generations=3, seed=seed)
    engine = EvolutionEngine(config)
    engine_rng = np.random.default_rng([seed, 1])
    reference = _ReferencePBT(5, budget, 3, config.opponent_window_k, [seed, 1])

    trials: list[Trial] = []
    completions = 0
    for _ in range(10_000):
        pending = [t for t in trials if t.status == "pending"]
        if pending and (len(pending) >= budget or script.random() < 0.5):
            done = pending[int(script.integers(len(pending)))]
            objective = float(script.integers(3)) / 2
            trials = [
                _complete(t, objective, completions) if t.trial_id == done.trial_id else t
                for t in trials
            ]
            reference.complete(done.trial_id, objective, completions)
            completions += 1
            continue

        suggestion = engine.get_new_suggestion(trials, engine_rng)
        expected = reference.suggest()
        if isinstance(suggestion, Defer):
            assert suggestion.reason == expected, seed
            if suggestion.study_complete:
                break
            assert pending, seed
            continue

        assert isinstance(expected, dict), (seed, expected)
        child = suggestion.child
        assert (
            child.trial_id, child.generation, child.parent_trial_id,
            child.initiator_parent_trial_id,
        ) == (expected["id"], expected["generation"], expected["parent"], expected["initiator"])
        assert child.hparams == {"lr": expected["lr"]}
        trials = apply_decision(trials, suggestion)
        assert {t.trial_id for t in trials if t.initiated_reproduction} == {
            t["id"] for t in reference.trials.values() if t["initiated"]
        }
    else:
        pytest.fail(f"schedule {seed} did not finish")

    initiators = [t.initiator_parent_trial_id for t in trials if t.initiator_parent_trial_id]
    assert len(initiators) == len(set(initiators))
    assert set(initiators) == {t.trial_id for t in trials if t.generation < 2}
    assert Counter(t.generation for t in trials)[2] >= 5


def test_engine_matches_step_by_step_model():
    for seed in range(1000):
        _conforms_to_reference(seed)
