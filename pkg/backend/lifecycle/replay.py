"""Training replay: re-run the lineage of chosen trials as a new study.

The replay study carries a ReplayPlan, so the engine emits the source trials
in execution order with their hyperparameters copied verbatim and warm starts
wired to the replayed parents. No evolution decisions happen. Unless the plan
reseeds, trainer noise is keyed on the source trial, so the deterministic toy
trainer reproduces the source measurements exactly.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from backend.api.messages import StudyStatus
from backend.lifecycle.dependency import extract_dependency_graph
from backend.models.study import ReplayEntry, ReplayPlan, StudyConfig, Trial
from backend.pbt_client import ServiceClient
from backend.worker.problems import ToyProblemSpec
from backend.worker.trainer import Worker

logger = logging.getLogger("pbt.lifecycle")


def build_replay_plan(
    source_study_id: str, targets: list[int], trials: list[Trial], reseed: bool = False,
) -> ReplayPlan:
    graph = extract_dependency_graph(targets, trials)
    by_id = {t.trial_id: t for t in trials}
    entries = [
        ReplayEntry(
            source_trial_id=trial_id,
            source_parent_trial_id=graph.parent(trial_id),
            generation=by_id[trial_id].generation,
            hparams=dict(by_id[trial_id].hparams),
        )
        for trial_id in graph.execution_order
    ]
    return ReplayPlan(
        source_study_id=source_study_id,
        targets=sorted(targets),
        entries=entries,
        reseed=reseed,
    )


def replay_config(source: StudyConfig, plan: ReplayPlan, out_study_id: str) -> StudyConfig:
    """The source config turned into a replay study."""
    return source.model_copy(update={
        "study_id": out_study_id,
        "replay": plan,
        "seed_hparams": [],
        "max_generations": None,
        "early_stopping_policy": "none",
    })


def replay(
    client: ServiceClient,
    source_study_id: str,
    targets: list[int],
    out_study_id: str,
    problem: ToyProblemSpec,
    data_dir: str | Path,
    workers: int = 1,
    reseed: bool = False,
    sleep: Callable[[float], None] = time.sleep,
) -> StudyStatus:
    """Create the replay study and run it to completion with local workers.

    The whole lineage is checked before anything executes.
    """
    source = client.get_study(source_study_id).config
    trials = client.list_trials(source_study_id).trials
    plan = build_replay_plan(source_study_id, targets, trials, reseed=reseed)
    client.create_study(replay_config(source, plan, out_study_id))
    logger.info(
        "Replaying %d trial(s) of %s into %s for targets %s",
        len(plan.entries), source_study_id, out_study_id, plan.targets,
    )

    pool = [
        Worker(client, out_study_id, problem, data_dir, worker_id=f"replay-{i}", sleep=sleep)
        for i in range(max(1, workers))
    ]
    if len(pool) == 1:
        pool[0].run()
    else:
        with ThreadPoolExecutor(max_workers=len(pool)) as executor:
            for future in [executor.submit(w.run) for w in pool]:
                future.result()
    return client.get_study(out_study_id)


def counterpart_map(trials: list[Trial]) -> dict[int, Trial]:
    """Replayed trials keyed by the source trial they reproduce."""
    return {
        t.source_trial_id: t for t in trials
        if t.source_trial_id is not None and t.status == "completed"
    }
