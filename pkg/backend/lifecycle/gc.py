"""Global checkpoint garbage collection.

A checkpoint is deleted once it has been evaluated (it appears in some
measurement) unless it is protected:

  * the warm-start source of a pending trial;
  * the latest checkpoint of a pending trial, which its worker may still
    hand in as the final checkpoint;
  * the final checkpoint of a completed trial that may still be chosen as a
    parent, i.e. that lies inside the opponent window of some current or
    future initiator (every completed trial under any_generation, or under
    past_generation with a window of 3 or more generations);
  * any final checkpoint, when keep_final is set.

Unevaluated checkpoints are never touched. Deletion is idempotent.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from backend.evolution.engine import Defer, EvolutionEngine
from backend.evolution.selection import can_initiate
from backend.models.study import StudyConfig, Trial
from backend.store.checkpoints import CheckpointStore
from backend.store.study_log import StudyLog

logger = logging.getLogger("pbt.gc")


@dataclass
class DeletionReport:
    study_id: str
    deleted: list[str] = field(default_factory=list)
    retained: list[str] = field(default_factory=list)
    unevaluated: list[str] = field(default_factory=list)
    bytes_freed: int = 0
    errors: list[str] = field(default_factory=list)
    dry_run: bool = False

    @property
    def retryable(self) -> bool:
        return bool(self.errors)


def study_is_complete(trials: list[Trial], config: StudyConfig) -> bool:
    outlook = EvolutionEngine(config).get_new_suggestion(trials, np.random.default_rng(0))
    return isinstance(outlook, Defer) and outlook.study_complete


def parent_candidates(trials: list[Trial], config: StudyConfig) -> set[int]:
    """Completed trials whose final checkpoint may still warm-start a child."""
    completed = [t for t in trials if t.status == "completed"]
    if study_is_complete(trials, config):
        return set()
    if config.replay is not None or config.opponent_strategy == "any_generation":
        return {t.trial_id for t in completed}
    # With k >= 3 a winner at g-k+1 puts the child at g-k+2, below every
    # current initiator, and that child's window reaches further back again.
    if config.opponent_strategy == "past_generation" and config.opponent_window_k >= 3:
        return {t.trial_id for t in completed}

    # Lowest generation a current or future initiator can have.
    frontier = [t.generation for t in trials if t.status == "pending"]
    frontier += [t.generation for t in completed if can_initiate(t, config.max_generations)]
    # Stopping a pending child hands the reproduction back to its initiator.
    by_id = {t.trial_id: t for t in trials}
    frontier += [
        by_id[t.initiator_parent_trial_id].generation
        for t in trials
        if t.status == "pending" and t.initiator_parent_trial_id in by_id
    ]
    if not frontier:
        return set()
    g_min = min(frontier)
    window = 1 if config.opponent_strategy == "same_generation" else config.opponent_window_k
    lowest = g_min - window + 1
    return {t.trial_id for t in completed if t.generation >= lowest}


def garbage_collect(
    trials: list[Trial],
    config: StudyConfig,
    store: CheckpointStore,
    keep_final: bool = True,
    dry_run: bool = False,
) -> DeletionReport:
    report = DeletionReport(study_id=config.study_id, dry_run=dry_run)

    evaluated = {
        _norm(m.checkpoint_path) for t in trials for m in t.measurements
    }
    protected = {
        _norm(t.warm_start_checkpoint_path)
        for t in trials
        if t.status == "pending" and t.warm_start_checkpoint_path
    }
    protected |= {
        _norm(t.measurements[-1].checkpoint_path)
        for t in trials
        if t.status == "pending" and t.measurements
    }
    parents = parent_candidates(trials, config)
    for t in trials:
        if t.final_checkpoint_path and (keep_final or t.trial_id in parents):
            protected.add(_norm(t.final_checkpoint_path))

    for path in store.list_checkpoints(config.study_id):
        key = _norm(path)
        if key not in evaluated:
            report.unevaluated.append(path)
            continue
        if key in protected:
            report.retained.append(path)
            continue
        if dry_run:
            report.deleted.append(path)
            continue
        try:
            report.bytes_freed += store.delete(path)
            report.deleted.append(path)
        except OSError as exc:
            report.errors.append(f"{path}: {exc}")
            logger.warning("Could not delete %s: %s", path, exc)

    logger.info(
        "GC %s: deleted=%d retained=%d unevaluated=%d freed=%d bytes%s",
        config.study_id, len(report.deleted), len(report.retained),
        len(report.unevaluated), report.bytes_freed, " (dry run)" if dry_run else "",
    )
    return report


def _norm(path: str | None) -> str:
    return str(Path(path)) if path else ""


class CheckpointCollector:
    """Periodic read-only scan of every study log followed by GC."""

    def __init__(
        self, data_dir: str | Path, keep_final: bool = True, dry_run: bool = False,
    ) -> None:
        self._log = StudyLog(data_dir, fsync=False)
        self._store = CheckpointStore(data_dir)
        self.keep_final = keep_final
        self.dry_run = dry_run

    def run_once(self, study_ids: list[str] | None = None) -> list[DeletionReport]:
        reports = []
        for study_id in study_ids or self._log.study_ids():
            record = self._log.load(study_id)
            reports.append(garbage_collect(
                record.trials, record.config, self._store,
                keep_final=self.keep_final, dry_run=self.dry_run,
            ))
        return reports

    def run_forever(
        self,
        interval: float,
        should_stop: Callable[[], bool] = lambda: False,
        sleep: Callable[[float], None] = time.sleep,
    ) -> int:
        """Collect every *interval* seconds until *should_stop*; returns cycles run."""
        cycles = 0
        while not should_stop():
            try:
                self.run_once()
            except Exception:
                logger.exception("GC cycle failed, will retry next cycle")
            cycles += 1
            if should_stop():
                break
            # Sleep in small increments to catch shutdown signals promptly
            slept = 0.0
            while slept < interval and not should_stop():
                step = min(5.0, interval - slept)
                sleep(step)
                slept += step
        logger.info("Checkpoint collector stopped after %d cycle(s)", cycles)
        return cycles
