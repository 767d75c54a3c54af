"""Worker harness: request a trial, train it, report measurements, complete it.

Trainer and evaluator run as one sequential loop. Every eval_every steps the
session writes a checkpoint and the worker reports a Measurement whose
objective is the toy problem's noiseless loss.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from backend.api.errors import PBTServiceError
from backend.models.study import Measurement, StudyConfig, Trial
from backend.pbt_client import ServiceClient
from backend.store.checkpoints import CheckpointStore
from backend.worker.problems import (
    NonFiniteStateError,
    ToyProblem,
    ToyProblemSpec,
    seed_key,
    toy_train_step,
)
from backend.worker.restore import RestoreReport, smart_restore

logger = logging.getLogger("pbt.worker")

_MAX_RETRIES = 3
_BACKOFF_SECONDS = [1, 2, 4]


def noise_key_for(trial: Trial, config: StudyConfig) -> tuple[int, ...]:
    """Replayed trials reuse their source trial's noise unless the plan reseeds."""
    plan = config.replay
    if plan is not None and not plan.reseed and trial.source_trial_id is not None:
        return seed_key(plan.source_study_id, trial.source_trial_id)
    return seed_key(trial.study_id, trial.trial_id)


class TrialSession:
    """Training state of one trial, advanced one evaluation window at a time."""

    def __init__(
        self,
        trial: Trial,
        config: StudyConfig,
        problem: ToyProblem,
        checkpoints: CheckpointStore,
    ) -> None:
        problem.spec.check_steps(config.steps_per_trial)
        self.trial = trial
        self.problem = problem
        self.steps_per_trial = config.steps_per_trial
        self.eval_every = problem.spec.eval_every
        self.base_step = trial.generation * config.steps_per_trial
        self.local_step = 0
        self.noise_key = noise_key_for(trial, config)
        self.last_checkpoint_path: str | None = None
        self._checkpoints = checkpoints

        fresh = problem.init_variables(trial.hparams)
        self.restore_report: RestoreReport | None = None
        if trial.warm_start_checkpoint_path:
            parent = checkpoints.load(trial.warm_start_checkpoint_path)
            self.variables, self.restore_report = smart_restore(parent, fresh)
            if not self.restore_report.exact:
                logger.info(
                    "Trial %d partial restore: mismatched=%s missing=%s",
                    trial.trial_id, self.restore_report.shape_mismatched,
                    self.restore_report.missing,
                )
        else:
            self.variables = fresh

    @property
    def global_step(self) -> int:
        return self.base_step + self.local_step

    @property
    def done(self) -> bool:
        return self.local_step >= self.steps_per_trial

    def advance(self) -> int:
        """Run one evaluation window of optimizer steps; returns the steps taken."""
        window = self.local_step // self.eval_every
        noise = self.problem.noise_window(self.noise_key, window)
        state = self.variables
        for i in range(self.eval_every):
            state = toy_train_step(
                state,
                self.trial.hparams,
                self.global_step + i,
                self.problem,
                None if noise is None else noise[i],
            )
        self.variables = state
        self.local_step += self.eval_every
        return self.eval_every

    def evaluate(self) -> Measurement:
        """Checkpoint the current state and measure it."""
        path = self._checkpoints.save(
            self.trial.study_id, self.trial.trial_id, self.global_step, self.variables,
        )
        self.last_checkpoint_path = path
        loss = self.problem.loss(self.variables, self.global_step)
        return Measurement(step=self.local_step, objectives=(loss,), checkpoint_path=path)


@dataclass
class WorkerSummary:
    completed: int = 0
    stopped: int = 0
    study_complete: bool = False


class Worker:
    """Requests trials from the service and runs them until the study is done."""

    def __init__(
        self,
        client: ServiceClient,
        study_id: str,
        problem: ToyProblemSpec,
        data_dir: str | Path,
        worker_id: str = "worker-0",
        poll_early_stops: bool = False,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self._client = client
        self.study_id = study_id
        self.problem = ToyProblem(problem)
        self.checkpoints = CheckpointStore(data_dir)
        self.worker_id = worker_id
        self._poll = poll_early_stops
        self._sleep = sleep
        self._config: StudyConfig | None = None

    @property
    def config(self) -> StudyConfig:
        if self._config is None:
            self._config = self._call("get_study", self.study_id).config
        return self._config

    def _call(self, method_name: str, *args: Any) -> Any:
        """Call a service method, retrying retryable failures with backoff."""
        last_error: PBTServiceError | None = None
        for attempt in range(_MAX_RETRIES):
            try:
                return getattr(self._client, method_name)(*args)
            except PBTServiceError as exc:
                if not exc.retryable:
                    raise
                last_error = exc
                logger.warning(
                    "%s %s failed (attempt %d/%d): %s",
                    self.worker_id, method_name, attempt + 1, _MAX_RETRIES, exc,
                )
                if attempt < _MAX_RETRIES - 1:
                    self._sleep(_BACKOFF_SECONDS[attempt])
        assert last_error is not None
        raise last_error

    # ── One trial ─────────────────────────────────────────────────────

    def session(self, trial: Trial) -> TrialSession:
        return TrialSession(trial, self.config, self.problem, self.checkpoints)

    def run_trial(self, trial: Trial) -> bool:
        """Train, report and complete *trial*. Returns False if it was stopped."""
        try:
            session = self.session(trial)
        except FileNotFoundError as exc:
            logger.error("Trial %d: warm-start checkpoint unreadable: %s", trial.trial_id, exc)
            self._call("stop_trial", self.study_id, trial.trial_id, "missing_checkpoint")
            return False

        while not session.done:
            try:
                session.advance()
            except NonFiniteStateError as exc:
                logger.error("Trial %d failed: %s", trial.trial_id, exc)
                self._call("stop_trial", self.study_id, trial.trial_id, "non_finite")
                return False
            measurement = session.evaluate()
            self._call("report_measurement", self.study_id, trial.trial_id, measurement)
            if self._poll and self._early_stopped(trial.trial_id):
                self._call("stop_trial", self.study_id, trial.trial_id, "early_stopped")
                return False

        assert session.last_checkpoint_path is not None
        self._call("complete_trial", self.study_id, trial.trial_id, session.last_checkpoint_path)
        return True

    def _early_stopped(self, trial_id: int) -> bool:
        stops = self._call("poll_early_stops", self.study_id)
        return trial_id in stops.trial_ids

    # ── Loop ──────────────────────────────────────────────────────────

    def run(
        self,
        max_trials: int | None = None,
        should_stop: Callable[[], bool] = lambda: False,
    ) -> WorkerSummary:
        summary = WorkerSummary()
        while not should_stop():
            if max_trials is not None and summary.completed + summary.stopped >= max_trials:
                break
            assignment = self._call("request_trial", self.study_id, self.worker_id)
            if assignment.trial is None:
                defer = assignment.defer
                if defer is not None and defer.study_complete:
                    summary.study_complete = True
                    logger.info("%s: study %s complete", self.worker_id, self.study_id)
                    break
                self._sleep(defer.retry_after_seconds if defer is not None else 1.0)
                continue

            trial = assignment.trial
            logger.info(
                "%s: trial %d gen %d hparams=%s",
                self.worker_id, trial.trial_id, trial.generation, trial.hparams,
            )
            if self.run_trial(trial):
                summary.completed += 1
            else:
                summary.stopped += 1
        return summary
