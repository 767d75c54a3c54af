"""Bench experiments. Each returns a pandas DataFrame with a fixed column set."""

from __future__ import annotations

import logging
import shutil
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from backend.api.service import PBTService
from backend.bench.plans import (
    ExperimentPlan,
    InvalidCutError,
    PlanValidationError,
    check_comparable,
)
from backend.bench.simulation import SimulatedCluster, SimulationResult
from backend.lifecycle.replay import replay
from backend.models.study import HParams, OpponentStrategy, Trial
from backend.pbt_client import LocalServiceClient
from backend.store.checkpoints import CheckpointStore
from backend.worker.problems import ToyProblem, ToyProblemSpec, seed_key, toy_train_step

logger = logging.getLogger("pbt.bench")

RESOURCE_COLUMNS = ["method", "plan", "seed", "resource", "step", "best_objective"]
STEP_COLUMNS = ["method", "plan", "seed", "step", "best_objective"]
STEP_PAIR_COLUMNS = ["seed", "step", "first_best", "second_best"]
CONTINUE_COLUMNS = ["method", "plan", "seed", "step", "objective", "best_objective", "lr"]
SCHEDULE_COLUMNS = ["plan", "seed", "trial_id", "start_step", "end_step", "lr", "optimal_lr"]
SEM_COLUMNS = ["method", "plan", "resource", "mean", "sem", "runs"]
SCALABILITY_COLUMNS = [
    "population", "workers", "generations", "sim_time", "worker_steps",
    "generations_per_time", "work_per_generation",
]
ABLATION_COLUMNS = ["strategy", "seed", "final_best_objective"]
REPLAY_COLUMNS = ["repeat", "study_id", "final_objective"]


def plan_data_dir(work_dir: str | Path, plan: ExperimentPlan, seed: int) -> Path:
    return Path(work_dir) / plan.name / f"seed-{seed}"


def run_plan(plan: ExperimentPlan, seed: int, work_dir: str | Path) -> SimulationResult | None:
    """Simulate one (plan, seed) in a fresh data directory; None for a zero budget."""
    data_dir = plan_data_dir(work_dir, plan, seed)
    if data_dir.exists():
        shutil.rmtree(data_dir)
    data_dir.mkdir(parents=True)

    if plan.total_resource_budget == 0:
        return None
    if plan.method != "pbt" and plan.arm_steps() == 0:
        return None
    config = plan.study_config(f"{plan.name}-s{seed}", seed)
    cluster = SimulatedCluster(
        config,
        plan.problem,
        data_dir,
        workers=plan.workers,
        resource_budget=plan.total_resource_budget,
        heterogeneity=plan.heterogeneity,
        trial_overhead=plan.trial_overhead,
    )
    return cluster.run()


def best_so_far(values: list[float]) -> list[float]:
    return [float(v) for v in np.minimum.accumulate(np.asarray(values, dtype=float))]


def final_best(result: SimulationResult | None) -> float:
    if result is None or not result.events:
        return float("nan")
    return min(e.objective for e in result.events)


# ── Method comparison ─────────────────────────────────────────────────

def run_comparison(
    plans: list[ExperimentPlan], work_dir: str | Path,
) -> tuple[pd.DataFrame, pd.DataFrame, dict[tuple[str, int], SimulationResult]]:
    """Best-so-far objective against resource and against training step."""
    check_comparable(plans)
    resource_rows: list[dict[str, object]] = []
    step_rows: list[dict[str, object]] = []
    results: dict[tuple[str, int], SimulationResult] = {}

    for plan in plans:
        for seed in plan.run_seeds():
            result = run_plan(plan, seed, work_dir)
            if result is None or not result.events:
                continue
            results[(plan.name, seed)] = result

            best = best_so_far([e.objective for e in result.events])
            for event, value in zip(result.events, best, strict=True):
                resource_rows.append({
                    "method": plan.method, "plan": plan.name, "seed": seed,
                    "resource": event.resource, "step": event.global_step,
                    "best_objective": value,
                })

            by_step = sorted(result.events, key=lambda e: (e.global_step, e.resource))
            best = best_so_far([e.objective for e in by_step])
            last: dict[int, float] = {}
            for event, value in zip(by_step, best, strict=True):
                last[event.global_step] = value
            for step, value in last.items():
                step_rows.append({
                    "method": plan.method, "plan": plan.name, "seed": seed,
                    "step": step, "best_objective": value,
                })

    return (
        pd.DataFrame(resource_rows, columns=RESOURCE_COLUMNS),
        pd.DataFrame(step_rows, columns=STEP_COLUMNS),
        results,
    )


def step_normalized(step: pd.DataFrame, first: str, second: str) -> pd.DataFrame:
    """Best-so-far objective of two plans at the last training step both reached, per shared seed."""
    rows = []
    a = step[step["plan"] == first]
    b = step[step["plan"] == second]
    for seed in sorted(set(a["seed"]) & set(b["seed"])):
        sa = a[a["seed"] == seed]
        sb = b[b["seed"] == seed]
        shared = min(int(sa["step"].max()), int(sb["step"].max()))
        rows.append({
            "seed": seed, "step": shared,
            "first_best": float(sa[sa["step"] <= shared]["best_objective"].min()),
            "second_best": float(sb[sb["step"] <= shared]["best_objective"].min()),
        })
    return pd.DataFrame(rows, columns=STEP_PAIR_COLUMNS)


# ── Continue training ─────────────────────────────────────────────────

def continue_training(
    plan: ExperimentPlan,
    seed: int,
    result: SimulationResult,
    cut_resource: int,
    extra_steps: int,
    data_dir: str | Path,
) -> pd.DataFrame:
    """Continue the best checkpoint at *cut_resource* with its hparams held fixed."""
    if cut_resource > result.worker_steps:
        raise InvalidCutError(
            f"cut at {cut_resource} lies beyond the {result.worker_steps} steps consumed",
        )
    eligible = [e for e in result.events if e.resource <= cut_resource]
    if not eligible:
        raise InvalidCutError(f"no measurement at or before resource {cut_resource}")
    best = min(eligible, key=lambda e: (e.objective, e.resource))
    trial = result.trial(best.trial_id)

    problem = ToyProblem(plan.problem)
    checkpoint = CheckpointStore(data_dir).load(best.checkpoint_path)
    state = dict(checkpoint.variables)
    hparams: HParams = dict(trial.hparams)
    key = seed_key(f"continue-{plan.name}", seed)
    eval_every = plan.problem.eval_every

    rows: list[dict[str, object]] = []
    best_value = best.objective
    start = best.global_step
    for window in range(extra_steps // eval_every):
        noise = problem.noise_window(key, window)
        for i in range(eval_every):
            step = start + window * eval_every + i
            state = toy_train_step(state, hparams, step, problem, None if noise is None else noise[i])
        step = start + (window + 1) * eval_every
        objective = problem.loss(state, step)
        best_value = min(best_value, objective)
        rows.append({
            "method": plan.method, "plan": plan.name, "seed": seed, "step": step,
            "objective": objective, "best_objective": best_value, "lr": float(hparams["lr"]),
        })
    return pd.DataFrame(rows, columns=CONTINUE_COLUMNS)


# ── Schedule extraction ───────────────────────────────────────────────

def lineage(trials: list[Trial], target_id: int) -> list[Trial]:
    """Root-to-target warm-start chain."""
    by_id = {t.trial_id: t for t in trials}
    chain = [by_id[target_id]]
    while chain[-1].parent_trial_id is not None:
        chain.append(by_id[chain[-1].parent_trial_id])
    return chain[::-1]


def extract_schedule(
    trials: list[Trial], target_id: int, steps_per_trial: int,
) -> list[tuple[int, HParams]]:
    """(start step, hparams) per change-point along the target's lineage."""
    by_id = {t.trial_id: t for t in trials}
    if by_id[target_id].status != "completed":
        raise ValueError(f"trial {target_id} is not completed")
    schedule: list[tuple[int, HParams]] = []
    for trial in lineage(trials, target_id):
        if schedule and schedule[-1][1] == trial.hparams:
            continue
        schedule.append((trial.generation * steps_per_trial, dict(trial.hparams)))
    return schedule


def best_final_trial(result: SimulationResult) -> Trial:
    completed = [t for t in result.trials if t.status == "completed" and t.last_objectives]
    return min(completed, key=lambda t: (t.last_objectives[0], t.trial_id))  # type: ignore[index]


def schedule_table(
    plan: ExperimentPlan, seed: int, result: SimulationResult,
) -> pd.DataFrame:
    target = best_final_trial(result)
    problem = ToyProblem(plan.problem)
    steps = result.config.steps_per_trial
    chain = lineage(result.trials, target.trial_id)
    rows = []
    for trial in chain:
        start = trial.generation * steps
        rows.append({
            "plan": plan.name, "seed": seed, "trial_id": trial.trial_id,
            "start_step": start, "end_step": start + steps,
            "lr": float(trial.hparams["lr"]),
            "optimal_lr": problem.optimal_lr(start + steps // 2),
        })
    return pd.DataFrame(rows, columns=SCHEDULE_COLUMNS)


def schedule_tracking(schedule: pd.DataFrame, factor: float = 1.2) -> float:
    """Fraction of segments whose lr is within *factor* of the optimal lr."""
    if schedule.empty:
        return float("nan")
    ratio = schedule["lr"] / schedule["optimal_lr"]
    within = (ratio <= factor) & (ratio >= 1.0 / factor)
    return float(within.mean())


# ── Sensitivity ───────────────────────────────────────────────────────

def sensitivity(
    plans: list[ExperimentPlan], repeats: int, work_dir: str | Path, levels: int = 10,
) -> pd.DataFrame:
    """SEM of the best-so-far objective across repeats at evenly spaced resource levels."""
    if repeats < 2:
        raise PlanValidationError("sensitivity needs at least 2 repeats")
    check_comparable(plans)
    rows: list[dict[str, object]] = []
    for plan in plans:
        seeds = plan.seeds[:repeats] if len(plan.seeds) >= repeats else list(range(repeats))
        curves = [run_plan(plan, seed, work_dir) for seed in seeds]
        budget = plan.total_resource_budget
        for level in np.linspace(budget / levels, budget, levels):
            values = [_best_at(result, level) for result in curves]
            values = [v for v in values if not np.isnan(v)]
            if len(values) < 2:
                continue
            rows.append({
                "method": plan.method, "plan": plan.name, "resource": int(level),
                "mean": float(np.mean(values)), "sem": float(stats.sem(values)),
                "runs": len(values),
            })
    return pd.DataFrame(rows, columns=SEM_COLUMNS)


def _best_at(result: SimulationResult | None, resource: float) -> float:
    if result is None:
        return float("nan")
    values = [e.objective for e in result.events if e.resource <= resource]
    return min(values) if values else float("nan")


# ── Scalability ───────────────────────────────────────────────────────

def scalability(
    populations: list[int],
    workers: list[int],
    work_dir: str | Path,
    steps_per_trial: int = 200,
    generations: int = 3,
    problem: ToyProblemSpec | None = None,
) -> pd.DataFrame:
    """Generations progressed per simulated time and worker-steps per generation."""
    problem = problem or ToyProblemSpec(eval_every=min(100, steps_per_trial))
    rows = []
    for population in populations:
        for n in workers:
            if n > population:
                continue
            plan = ExperimentPlan(
                name=f"scal-p{population}-w{n}",
                population_size=population,
                worker_budget=n,
                steps_per_trial=steps_per_trial,
                opponent_strategy="same_generation",
                problem=problem,
            )
            data_dir = Path(work_dir) / plan.name
            if data_dir.exists():
                shutil.rmtree(data_dir)
            config = plan.study_config(plan.name, 0).model_copy(
                update={"max_generations": generations},
            )
            result = SimulatedCluster(config, problem, data_dir, workers=n).run()
            done = result.generations
            rows.append({
                "population": population,
                "workers": n,
                "generations": done,
                "sim_time": result.sim_time,
                "worker_steps": result.worker_steps,
                "generations_per_time": done / result.sim_time if result.sim_time else 0.0,
                "work_per_generation": result.worker_steps / done if done else float("nan"),
            })
    return pd.DataFrame(rows, columns=SCALABILITY_COLUMNS)


def scalability_fit(table: pd.DataFrame, population: int) -> float:
    """R^2 of generations-per-time against worker count for one population."""
    subset = table[table["population"] == population]
    if len(subset) < 2:
        return float("nan")
    fit = stats.linregress(subset["workers"], subset["generations_per_time"])
    return float(fit.rvalue**2)


# ── Opponent ablation ─────────────────────────────────────────────────

def opponent_ablation(
    plan: ExperimentPlan,
    strategies: list[OpponentStrategy],
    work_dir: str | Path,
) -> pd.DataFrame:
    """Matched-seed PBT runs differing only in opponent strategy."""
    rows = []
    for strategy in strategies:
        variant = plan.model_copy(update={
            "name": f"{plan.name}-{strategy}", "opponent_strategy": strategy,
        })
        for seed in plan.run_seeds():
            rows.append({
                "strategy": strategy,
                "seed": seed,
                "final_best_objective": final_best(run_plan(variant, seed, work_dir)),
            })
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)


# ── Replay stability ──────────────────────────────────────────────────

def replay_stability(
    plan: ExperimentPlan,
    seed: int,
    result: SimulationResult,
    repeats: int,
    data_dir: str | Path,
    sleep: Callable[[float], None] = lambda _s: None,
) -> tuple[pd.DataFrame, dict[str, float]]:
    """Replay the best final trial with fresh trainer noise *repeats* times."""
    service = PBTService(data_dir, defer_retry_seconds=0.0, fsync=False)
    client = LocalServiceClient(service)
    target = best_final_trial(result)
    rows = []
    for i in range(repeats):
        out = f"{result.config.study_id}-replay-{i}"
        replay(
            client, result.config.study_id, [target.trial_id], out, plan.problem,
            data_dir, reseed=True, sleep=sleep,
        )
        replayed = [
            t for t in client.list_trials(out).trials if t.source_trial_id == target.trial_id
        ]
        objective = replayed[0].last_objectives if replayed else None
        rows.append({
            "repeat": i, "study_id": out,
            "final_objective": float(objective[0]) if objective and objective[0] is not None
            else float("nan"),
        })
    table = pd.DataFrame(rows, columns=REPLAY_COLUMNS)
    values = table["final_objective"].dropna().to_numpy()
    summary = {"mean": float(np.mean(values)) if len(values) else float("nan")}
    if len(values) >= 2 and np.std(values) > 0:
        low, high = stats.t.interval(
            0.95, len(values) - 1, loc=np.mean(values), scale=stats.sem(values),
        )
        summary.update({"ci_low": float(low), "ci_high": float(high)})
    else:
        summary.update({"ci_low": summary["mean"], "ci_high": summary["mean"]})
    return table, summary
