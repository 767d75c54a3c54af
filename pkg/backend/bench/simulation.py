"""Simulated cluster: simulated workers on a simpy clock driving an in-process service.

Each worker runs the real TrialSession and talks to a real PBTService through
LocalServiceClient; only time is simulated. A worker needs ``speed`` time
units per training step, drawn per worker from a seeded log-normal, plus an
optional fixed overhead per trial. Resource is counted in completed trainer
steps and stamped on every measurement event. A window is reserved before it
runs so concurrent workers never overshoot the budget, and a trial that cannot
reserve its next window is stopped.
"""

from __future__ import annotations

import logging
from collections.abc import Generator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import simpy

from backend.api.service import PBTService
from backend.evolution.selection import last_complete_generation
from backend.models.study import StudyConfig, Trial
from backend.pbt_client import LocalServiceClient
from backend.store.checkpoints import CheckpointStore
from backend.worker.problems import NonFiniteStateError, ToyProblem, ToyProblemSpec
from backend.worker.trainer import TrialSession

logger = logging.getLogger("pbt.bench")


@dataclass(frozen=True)
class MeasurementEvent:
    sim_time: float
    resource: int
    trial_id: int
    generation: int
    global_step: int
    objective: float
    checkpoint_path: str


@dataclass
class SimulationResult:
    config: StudyConfig
    trials: list[Trial]
    events: list[MeasurementEvent] = field(default_factory=list)
    worker_steps: int = 0
    sim_time: float = 0.0
    study_complete: bool = False
    worker_speeds: list[float] = field(default_factory=list)

    @property
    def generations(self) -> int:
        return last_complete_generation(self.trials, self.config.population_size) + 1

    def trial(self, trial_id: int) -> Trial:
        for t in self.trials:
            if t.trial_id == trial_id:
                return t
        raise KeyError(trial_id)


def worker_speeds(n: int, sigma: float, seed: int) -> list[float]:
    """Per-worker time-per-step multipliers; all 1.0 when sigma is 0."""
    if sigma == 0.0:
        return [1.0] * n
    rng = np.random.default_rng([seed, 0x5EED])
    return [float(s) for s in rng.lognormal(mean=0.0, sigma=sigma, size=n)]


class SimulatedCluster:
    def __init__(
        self,
        config: StudyConfig,
        problem: ToyProblemSpec,
        data_dir: str | Path,
        workers: int,
        resource_budget: int | None = None,
        heterogeneity: float = 0.0,
        trial_overhead: float = 0.0,
        service: PBTService | None = None,
    ) -> None:
        self.config = config
        self.problem = ToyProblem(problem)
        self.service = service or PBTService(data_dir, defer_retry_seconds=0.0, fsync=False)
        self.client = LocalServiceClient(self.service)
        self.checkpoints = CheckpointStore(data_dir)
        self.n_workers = workers
        self.resource_budget = resource_budget
        self.trial_overhead = trial_overhead
        self.speeds = worker_speeds(workers, heterogeneity, config.seed)

        self.env = simpy.Environment()
        self._changed = self.env.event()
        self._events: list[MeasurementEvent] = []
        self._reserved_steps = 0
        self._completed_steps = 0
        self._study_complete = False

    # ── Budget ────────────────────────────────────────────────────────

    def _reserve(self, steps: int) -> bool:
        if self.resource_budget is not None and self._reserved_steps + steps > self.resource_budget:
            return False
        self._reserved_steps += steps
        return True

    def _notify(self) -> None:
        changed, self._changed = self._changed, self.env.event()
        changed.succeed()

    # ── Worker process ────────────────────────────────────────────────

    def _worker(self, index: int) -> Generator[Any, Any, None]:
        worker_id = f"sim-{index}"
        speed = self.speeds[index]
        study_id = self.config.study_id
        while True:
            assignment = self.client.request_trial(study_id, worker_id)
            if assignment.trial is None:
                if assignment.defer is not None and assignment.defer.study_complete:
                    self._study_complete = True
                    self._notify()
                    return
                yield self._changed
                continue

            trial = assignment.trial
            if self.trial_overhead:
                yield self.env.timeout(self.trial_overhead * speed)
            session = TrialSession(trial, self.config, self.problem, self.checkpoints)
            outcome = "completed"
            while not session.done:
                if not self._reserve(session.eval_every):
                    outcome = "budget_exhausted"
                    break
                yield self.env.timeout(session.eval_every * speed)
                self._completed_steps += session.eval_every
                try:
                    session.advance()
                except NonFiniteStateError:
                    outcome = "non_finite"
                    break
                measurement = session.evaluate()
                self.client.report_measurement(study_id, trial.trial_id, measurement)
                self._events.append(MeasurementEvent(
                    sim_time=float(self.env.now),
                    resource=self._completed_steps,
                    trial_id=trial.trial_id,
                    generation=trial.generation,
                    global_step=session.global_step,
                    objective=float(measurement.objectives[0] or 0.0),
                    checkpoint_path=measurement.checkpoint_path,
                ))

            if outcome == "completed":
                assert session.last_checkpoint_path is not None
                self.client.complete_trial(study_id, trial.trial_id, session.last_checkpoint_path)
            else:
                self.client.stop_trial(study_id, trial.trial_id, outcome)
            self._notify()
            if outcome == "budget_exhausted":
                return

    # ── Run ───────────────────────────────────────────────────────────

    def run(self) -> SimulationResult:
        self.client.create_study(self.config)
        for i in range(self.n_workers):
            self.env.process(self._worker(i))
        self.env.run()

        trials = self.client.list_trials(self.config.study_id).trials
        logger.info(
            "Simulated %s: %d trials, %d worker-steps, t=%.1f",
            self.config.study_id, len(trials), self._completed_steps, self.env.now,
        )
        return SimulationResult(
            config=self.config,
            trials=trials,
            events=list(self._events),
            worker_steps=self._completed_steps,
            sim_time=float(self.env.now),
            study_complete=self._study_complete,
            worker_speeds=list(self.speeds),
        )
