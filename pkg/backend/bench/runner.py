"""Bench CLI: run an experiment suite and write its tables.

Usage:
    python -m backend.bench run --plan suite.json --out results/

Writes resource_curve.csv, step_curve.csv, continue.csv, schedule.csv,
sem.csv, scalability.csv, ablation.csv and replay_stability.csv (each only
when the suite asks for it) plus checks.json with the directional claims
evaluated on this run.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any

import pandas as pd
from rich.console import Console
from rich.table import Table

from backend.bench.experiments import (
    continue_training,
    opponent_ablation,
    plan_data_dir,
    replay_stability,
    run_comparison,
    scalability,
    scalability_fit,
    schedule_table,
    schedule_tracking,
    sensitivity,
    step_normalized,
)
from backend.bench.plans import BenchSuite, ExperimentPlan, PlanValidationError

logger = logging.getLogger("pbt.bench")
console = Console()


def _write(table: pd.DataFrame, out: Path, name: str) -> None:
    table.to_csv(out / name, index=False, float_format="%.10g")
    logger.info("Wrote %s (%d rows)", out / name, len(table))


def _final_best(resource: pd.DataFrame) -> pd.DataFrame:
    """Final best objective per (method, plan, seed)."""
    if resource.empty:
        return resource
    return resource.groupby(["method", "plan", "seed"], as_index=False)["best_objective"].last()


def _clean(value: Any) -> Any:
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def run_suite(suite: BenchSuite, out: Path) -> dict[str, Any]:
    out.mkdir(parents=True, exist_ok=True)
    work = out / "runs"
    checks: dict[str, Any] = {}

    results = {}
    if suite.comparison:
        resource, step, results = run_comparison(suite.comparison, work)
        _write(resource, out, "resource_curve.csv")
        _write(step, out, "step_curve.csv")
        finals = _final_best(resource)
        if not finals.empty:
            checks.update(_comparison_checks(finals, step, suite.comparison))
            console.print(render_finals(finals))

    if suite.continue_training is not None:
        spec = suite.continue_training
        plan = suite.plan(spec.plan)
        seed = plan.run_seeds()[0]
        if (plan.name, seed) not in results:
            raise PlanValidationError(f"no comparison result for plan {plan.name!r}")
        table = continue_training(
            plan, seed, results[(plan.name, seed)], spec.cut_resource, spec.extra_steps,
            plan_data_dir(work, plan, seed),
        )
        _write(table, out, "continue.csv")

    if suite.schedule_plan is not None:
        plan = suite.plan(suite.schedule_plan)
        tables = [
            schedule_table(plan, seed, results[(plan.name, seed)])
            for seed in plan.run_seeds() if (plan.name, seed) in results
        ]
        schedule = pd.concat(tables, ignore_index=True) if tables else pd.DataFrame()
        _write(schedule, out, "schedule.csv")
        checks["schedule_tracking_fraction"] = schedule_tracking(schedule)

    if suite.sensitivity is not None:
        spec_s = suite.sensitivity
        plans = [suite.plan(name) for name in spec_s.plans]
        sem = sensitivity(plans, spec_s.repeats, work / "sensitivity", levels=spec_s.levels)
        _write(sem, out, "sem.csv")
        if not sem.empty:
            final = sem[sem["resource"] == sem["resource"].max()]
            by_method = final.groupby("method")["sem"].min().to_dict()
            if "pbt" in by_method and "random" in by_method:
                checks["sem_pbt_le_random"] = bool(by_method["pbt"] <= by_method["random"])

    if suite.scalability is not None:
        spec_c = suite.scalability
        table = scalability(
            spec_c.populations, spec_c.workers, work / "scalability",
            steps_per_trial=spec_c.steps_per_trial, generations=spec_c.generations,
            problem=spec_c.problem,
        )
        _write(table, out, "scalability.csv")
        checks["scalability_r2"] = scalability_fit(table, spec_c.fit_population)
        per_gen = table.groupby("population")["work_per_generation"].mean()
        if len(per_gen) >= 2:
            checks["work_per_generation_ratio"] = float(per_gen.iloc[-1] / per_gen.iloc[0])

    if suite.ablation is not None:
        plan = suite.plan(suite.ablation.plan).model_copy(
            update={"heterogeneity": suite.ablation.heterogeneity},
        )
        table = opponent_ablation(plan, suite.ablation.strategies, work / "ablation")
        _write(table, out, "ablation.csv")
        medians = table.groupby("strategy")["final_best_objective"].median().to_dict()
        checks["ablation_medians"] = medians
        if "past_generation" in medians and len(medians) > 1:
            checks["ablation_past_best"] = bool(
                all(medians["past_generation"] <= v for v in medians.values())
            )
            for strategy, value in medians.items():
                if strategy != "past_generation":
                    checks[f"ablation_past_le_{strategy}"] = bool(
                        medians["past_generation"] <= value
                    )

    if suite.replay_stability is not None:
        spec_r = suite.replay_stability
        plan = suite.plan(spec_r.plan)
        seed = plan.run_seeds()[0]
        table, summary = replay_stability(
            plan, seed, results[(plan.name, seed)], spec_r.repeats,
            plan_data_dir(work, plan, seed),
        )
        _write(table, out, "replay_stability.csv")
        checks["replay_stability"] = summary

    checks = {k: _clean(v) for k, v in checks.items()}
    (out / "checks.json").write_text(json.dumps(checks, indent=2, sort_keys=True))
    return checks


def _comparison_checks(
    finals: pd.DataFrame, step: pd.DataFrame, plans: list[ExperimentPlan],
) -> dict[str, Any]:
    """Per-seed wins of each PBT plan over the baselines, as fractions of shared seeds,
    and larger-population PBT against smaller at the training step both reached."""
    checks: dict[str, Any] = {}
    pivot = finals.pivot_table(index="seed", columns="plan", values="best_objective", aggfunc="min")
    evolving = [p for p in plans if p.method == "pbt" and p.name in pivot]
    baselines = [p.name for p in plans if p.method != "pbt" and p.name in pivot]

    for plan in evolving:
        for baseline in baselines:
            shared = pivot[[plan.name, baseline]].dropna()
            if len(shared):
                checks[f"{plan.name}_beats_{baseline}_fraction"] = float(
                    (shared[plan.name] < shared[baseline]).mean()
                )
        if len(baselines) > 1:
            shared = pivot[[plan.name, *baselines]].dropna()
            if len(shared):
                wins = shared[baselines].gt(shared[plan.name], axis=0).all(axis=1)
                checks[f"{plan.name}_beats_baselines_fraction"] = float(wins.mean())

    for larger in evolving:
        for smaller in evolving:
            if larger.population_size <= smaller.population_size:
                continue
            pairs = step_normalized(step, larger.name, smaller.name).dropna()
            if not pairs.empty:
                checks[f"{larger.name}_le_{smaller.name}_step_fraction"] = float(
                    (pairs["first_best"] <= pairs["second_best"]).mean()
                )
    return checks


def render_finals(finals: pd.DataFrame) -> Table:
    table = Table(title="Final best objective", show_lines=True)
    table.add_column("Plan", style="bold cyan")
    table.add_column("Method")
    table.add_column("Seed", justify="right")
    table.add_column("Best", justify="right")
    for row in finals.itertuples(index=False):
        table.add_row(str(row.plan), str(row.method), str(row.seed), f"{row.best_objective:.6g}")
    return table


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="PBT bench")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="Run an experiment suite")
    run.add_argument("--plan", required=True, type=Path, help="BenchSuite JSON file")
    run.add_argument("--out", required=True, type=Path, help="Output directory")
    run.add_argument("--log-level", default="warning", help="debug, info, warning, error")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.WARNING),
        format="%(asctime)s  %(name)-18s  %(levelname)-7s  %(message)s",
        datefmt="%H:%M:%S",
    )
    suite = BenchSuite.model_validate_json(args.plan.read_text())
    try:
        checks = run_suite(suite, args.out)
    except PlanValidationError as exc:
        console.print(f"[bold red]Invalid plan:[/] {exc}")
        return 2

    table = Table(title="Checks", show_lines=True)
    table.add_column("Claim", style="bold cyan")
    table.add_column("Value", justify="right")
    for key, value in checks.items():
        table.add_row(key, json.dumps(value))
    console.print(table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
