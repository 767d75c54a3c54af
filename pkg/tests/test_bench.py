from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
import pytest
from pydantic import ValidationError

from backend.bench.experiments import (
    ABLATION_COLUMNS,
    RESOURCE_COLUMNS,
    best_final_trial,
    best_so_far,
    continue_training,
    extract_schedule,
    final_best,
    opponent_ablation,
    replay_stability,
    run_comparison,
    run_plan,
    scalability,
    scalability_fit,
    schedule_tracking,
    sensitivity,
    step_normalized,
)
from backend.bench.plans import (
    AblationSpec,
    BenchSuite,
    ExperimentPlan,
    InvalidCutError,
    PlanValidationError,
    ScalabilitySpec,
    check_comparable,
)
from backend.bench.runner import run_suite
from backend.bench.simulation import worker_speeds
from backend.worker.problems import ToyProblemSpec
from tests.conftest import make_trial

SMALL = ToyProblemSpec(kind="lr_quadratic", dimension=4, eval_every=200)


def _pbt(**overrides) -> ExperimentPlan:
    fields = {
        "name": "pbt",
        "population_size": 2,
        "worker_budget": 2,
        "steps_per_trial": 400,
        "total_resource_budget": 2400,
        "problem": SMALL,
        "lr_range": (1e-3, 1.0),
    }
    fields.update(overrides)
    return ExperimentPlan(**fields)


# ── Plans ─────────────────────────────────────────────────────────────

def test_grid_plan_needs_values():
    with pytest.raises(ValidationError):
        ExperimentPlan(name="g", method="grid")


def test_grid_study_config():
    plan = ExperimentPlan(
        name="grid", method="grid", grid_values=[0.3, 0.01, 0.1], total_resource_budget=3000,
        problem=SMALL,
    )
    config = plan.study_config("g", 0)
    assert config.population_size == 3
    assert config.steps_per_trial == 1000
    assert config.max_generations == 1
    assert config.seed_hparams == [{"lr": 0.01}, {"lr": 0.1}, {"lr": 0.3}]


def test_comparable_plans_share_budget():
    with pytest.raises(PlanValidationError):
        check_comparable([_pbt(), _pbt(name="other", total_resource_budget=100)])
    with pytest.raises(PlanValidationError):
        check_comparable([_pbt(), _pbt()])


def test_worker_speeds():
    assert worker_speeds(3, 0.0, 1) == [1.0, 1.0, 1.0]
    speeds = worker_speeds(3, 0.5, 1)
    assert speeds == worker_speeds(3, 0.5, 1)
    assert len(set(speeds)) == 3


# ── Simulation ────────────────────────────────────────────────────────

def test_grid_runs_one_trial_per_value(tmp_path):
    values = [1e-3, 1e-2, 1e-1, 0.3, 1.0]
    plan = ExperimentPlan(
        name="grid", method="grid", grid_values=values, total_resource_budget=5000, problem=SMALL,
    )
    result = run_plan(plan, 0, tmp_path)
    assert result.study_complete
    assert sorted(t.hparams["lr"] for t in result.trials) == values
    assert all(t.generation == 0 and t.status == "completed" for t in result.trials)
    assert all(len(t.measurements) == 5 for t in result.trials)
    assert result.worker_steps == 5000


def test_event_resource_counts_completed_steps(tmp_path):
    values = [1e-3, 1e-2, 1e-1, 0.3, 1.0]
    plan = ExperimentPlan(
        name="grid", method="grid", grid_values=values, total_resource_budget=5000, problem=SMALL,
    )
    result = run_plan(plan, 0, tmp_path)
    assert [e.resource for e in result.events] == list(range(200, 5001, 200))


def test_event_resource_under_uneven_workers(tmp_path):
    result = run_plan(_pbt(total_resource_budget=2200, heterogeneity=0.5), 0, tmp_path / "pbt")
    resources = [e.resource for e in result.events]
    assert resources == [200 * (i + 1) for i in range(len(resources))]
    assert resources[-1] == result.worker_steps
    times = [e.sim_time for e in result.events]
    assert times == sorted(times)


def test_budget_is_never_exceeded(tmp_path):
    result = run_plan(_pbt(total_resource_budget=2200), 0, tmp_path)
    assert result.worker_steps <= 2200
    assert result.events[-1].resource <= 2200
    stopped = [t for t in result.trials if t.status == "stopped"]
    assert stopped


def test_zero_budget_gives_empty_tables(tmp_path):
    resource, step, results = run_comparison([_pbt(total_resource_budget=0)], tmp_path)
    assert resource.empty and step.empty and results == {}
    assert list(resource.columns) == RESOURCE_COLUMNS


def test_comparison_curves_are_monotone(tmp_path):
    resource, step, results = run_comparison([_pbt(seeds=[0, 1])], tmp_path)
    assert set(resource["seed"]) == {0, 1}
    for _, group in resource.groupby("seed"):
        assert group["best_objective"].is_monotonic_decreasing
        assert group["resource"].is_monotonic_increasing
    assert set(results) == {("pbt", 0), ("pbt", 1)}


def test_best_so_far():
    assert best_so_far([3.0, 1.0, 2.0, 0.5]) == [3.0, 1.0, 1.0, 0.5]


# ── Continue training and schedules ───────────────────────────────────

def test_continue_training(tmp_path):
    plan = _pbt()
    result = run_plan(plan, 0, tmp_path)
    data_dir = tmp_path / plan.name / "seed-0"

    table = continue_training(plan, 0, result, 1200, 1000, data_dir)
    assert len(table) == 5
    assert table["lr"].nunique() == 1
    assert table["best_objective"].is_monotonic_decreasing

    with pytest.raises(InvalidCutError):
        continue_training(plan, 0, result, result.worker_steps + 1, 1000, data_dir)


def test_extract_schedule_merges_unchanged_segments():
    trials = [
        make_trial(1, hparams={"lr": 0.1}),
        make_trial(2, generation=1, parent_trial_id=1, hparams={"lr": 0.1}),
        make_trial(3, generation=2, parent_trial_id=2, hparams={"lr": 0.05}),
        make_trial(4, generation=3, parent_trial_id=3, status="pending", objective=None),
    ]
    assert extract_schedule(trials, 3, 1000) == [(0, {"lr": 0.1}), (2000, {"lr": 0.05})]
    with pytest.raises(ValueError):
        extract_schedule(trials, 4, 1000)


def test_schedule_tracking():
    table = pd.DataFrame({"lr": [0.01, 0.1, 0.5], "optimal_lr": [0.01, 0.11, 0.1]})
    assert schedule_tracking(table) == pytest.approx(2 / 3)
    assert pd.isna(schedule_tracking(pd.DataFrame(columns=["lr", "optimal_lr"])))


# ── Sensitivity ───────────────────────────────────────────────────────

def test_sensitivity_needs_two_repeats(tmp_path):
    with pytest.raises(PlanValidationError):
        sensitivity([_pbt()], 1, tmp_path)


def test_identical_seeds_have_zero_sem(tmp_path):
    table = sensitivity([_pbt(seeds=[3, 3])], 2, tmp_path, levels=4)
    assert not table.empty
    assert (table["sem"] == 0.0).all()
    assert (table["runs"] == 2).all()


# ── Scalability ───────────────────────────────────────────────────────

def test_scalability_is_linear_in_workers(tmp_path):
    spec = ScalabilitySpec()
    table = scalability(
        spec.populations, spec.workers, tmp_path,
        steps_per_trial=spec.steps_per_trial, generations=spec.generations, problem=spec.problem,
    )
    assert (table["generations"] == 3).all()
    per_gen = table.groupby("population")["work_per_generation"].mean()
    assert per_gen[20] / per_gen[5] == pytest.approx(4.0)
    assert scalability_fit(table, 20) >= 0.95


# ── Opponent strategies ───────────────────────────────────────────────

def test_unbounded_past_window_matches_any_generation(tmp_path):
    # Three lockstep rounds: no initiator ever sees a completed trial of a
    # later generation, so both windows hold the same opponents.
    base = _pbt(population_size=5, worker_budget=5, total_resource_budget=6000)
    past = base.model_copy(update={
        "name": "past", "opponent_strategy": "past_generation", "opponent_window_k": 1000,
    })
    anything = base.model_copy(update={"name": "any", "opponent_strategy": "any_generation"})

    def trace(plan):
        result = run_plan(plan, 0, tmp_path)
        return [
            (t.trial_id, t.parent_trial_id, t.initiator_parent_trial_id, t.hparams)
            for t in result.trials if t.status == "completed"
        ]

    past_trace = trace(past)
    assert len(past_trace) == 15
    assert past_trace == trace(anything)


def test_opponent_ablation_runs_matched_seeds(tmp_path):
    plan = _pbt(seeds=[0, 1])
    strategies = ["past_generation", "same_generation"]
    table = opponent_ablation(plan, strategies, tmp_path)
    assert list(table.columns) == ABLATION_COLUMNS
    assert list(zip(table["strategy"], table["seed"], strict=True)) == [
        ("past_generation", 0), ("past_generation", 1),
        ("same_generation", 0), ("same_generation", 1),
    ]
    assert table["final_best_objective"].notna().all()

    again = opponent_ablation(plan, strategies, tmp_path / "again")
    pd.testing.assert_frame_equal(table, again)


# ── Replay stability ──────────────────────────────────────────────────

def test_noiseless_replay_has_no_spread(tmp_path):
    plan = _pbt()
    result = run_plan(plan, 0, tmp_path)
    target = best_final_trial(result)
    table, summary = replay_stability(plan, 0, result, 3, tmp_path / plan.name / "seed-0")

    assert list(table["repeat"]) == [0, 1, 2]
    assert table["final_objective"].tolist() == [target.last_objectives[0]] * 3
    assert summary["mean"] == pytest.approx(target.last_objectives[0])
    assert summary["ci_low"] == pytest.approx(summary["mean"])
    assert summary["ci_high"] == pytest.approx(summary["mean"])


# ── Suite runner ──────────────────────────────────────────────────────

def test_run_suite_writes_tables_and_checks(tmp_path):
    suite = BenchSuite(
        comparison=[_pbt(), _pbt(name="random", method="random")],
        schedule_plan="pbt",
    )
    checks = run_suite(suite, tmp_path)
    assert (tmp_path / "resource_curve.csv").exists()
    assert (tmp_path / "step_curve.csv").exists()
    assert (tmp_path / "schedule.csv").exists()
    written = json.loads((tmp_path / "checks.json").read_text())
    assert "pbt_beats_random_fraction" in written
    assert 0.0 <= written["pbt_beats_random_fraction"] <= 1.0
    assert written == checks


def test_run_suite_compares_each_population(tmp_path):
    suite = BenchSuite(
        comparison=[
            _pbt(name="big", population_size=4),
            _pbt(name="small"),
            ExperimentPlan(
                name="grid", method="grid", grid_values=[0.01, 0.1], total_resource_budget=2400,
                problem=SMALL,
            ),
            _pbt(name="random", method="random"),
        ],
        ablation=AblationSpec(plan="big", strategies=["past_generation", "any_generation"]),
    )
    checks = run_suite(suite, tmp_path)
    for key in (
        "big_beats_grid_fraction", "small_beats_random_fraction",
        "big_beats_baselines_fraction", "big_le_small_step_fraction",
        "ablation_past_le_any_generation",
    ):
        assert key in checks
    assert "small_le_big_step_fraction" not in checks
    assert set(pd.read_csv(tmp_path / "ablation.csv")["strategy"]) == {
        "past_generation", "any_generation",
    }


def test_step_normalized_stops_at_shared_step():
    step = pd.DataFrame([
        {"method": "pbt", "plan": "a", "seed": 0, "step": 100, "best_objective": 3.0},
        {"method": "pbt", "plan": "a", "seed": 0, "step": 200, "best_objective": 2.0},
        {"method": "pbt", "plan": "b", "seed": 0, "step": 100, "best_objective": 2.5},
        {"method": "pbt", "plan": "b", "seed": 0, "step": 200, "best_objective": 2.5},
        {"method": "pbt", "plan": "b", "seed": 0, "step": 300, "best_objective": 1.0},
        {"method": "pbt", "plan": "b", "seed": 1, "step": 100, "best_objective": 1.0},
    ])
    pairs = step_normalized(step, "a", "b")
    assert pairs.to_dict("records") == [
        {"seed": 0, "step": 200, "first_best": 2.0, "second_best": 2.5},
    ]


# ── Full-scale directional checks ─────────────────────────────────────

SUITE_FILE = Path(__file__).resolve().parents[1] / "configs" / "suite.json"


@pytest.fixture(scope="module")
def shipped_suite() -> BenchSuite:
    return BenchSuite.model_validate_json(SUITE_FILE.read_text())


@pytest.fixture(scope="module")
def shipped_comparison(shipped_suite, tmp_path_factory):
    return run_comparison(shipped_suite.comparison, tmp_path_factory.mktemp("comparison"))


def test_shipped_suite_matches_budget():
    suite = BenchSuite.model_validate_json(SUITE_FILE.read_text())
    check_comparable(suite.comparison)
    assert {p.total_resource_budget for p in suite.comparison} == {50_000}
    assert suite.plan("pbt20").population_size == 20
    assert suite.plan("pbt5").population_size == 5
    assert all(p.workers == 5 for p in suite.comparison)
    assert suite.ablation is not None and suite.ablation.heterogeneity > 0


@pytest.mark.slow
def test_pbt_beats_grid_and_random(shipped_comparison):
    _, _, results = shipped_comparison
    wins = 0
    for seed in range(5):
        pbt = final_best(results[("pbt20", seed)])
        baselines = min(final_best(results[("grid", seed)]), final_best(results[("random", seed)]))
        wins += pbt < baselines
    assert wins >= 4


@pytest.mark.slow
def test_larger_population_wins_at_equal_steps(shipped_comparison):
    _, step, _ = shipped_comparison
    pairs = step_normalized(step, "pbt20", "pbt5")
    assert len(pairs) == 5
    assert (pairs["first_best"] <= pairs["second_best"]).sum() >= 3


@pytest.mark.slow
def test_pbt_spread_across_seeds_below_random(shipped_suite, tmp_path):
    plans = [shipped_suite.plan("pbt20"), shipped_suite.plan("random")]
    sem = sensitivity(plans, 5, tmp_path)
    final = sem[sem["resource"] == sem["resource"].max()].set_index("plan")["sem"]
    assert final["pbt20"] <= final["random"]


@pytest.mark.slow
def test_past_generation_beats_any_generation_with_uneven_workers(shipped_suite, tmp_path):
    spec = shipped_suite.ablation
    plan = shipped_suite.plan(spec.plan).model_copy(update={"heterogeneity": spec.heterogeneity})
    table = opponent_ablation(plan, ["past_generation", "any_generation"], tmp_path)
    medians = table.groupby("strategy")["final_best_objective"].median()
    assert medians["past_generation"] <= medians["any_generation"]
