"""PBTService, the trial-lifecycle controller behind the HTTP API.

The service holds no study state in memory beyond a read cache: every request
loads the persisted StudyRecord, decides, appends its transition to the study
log and only then replies. Requests on one study are serialized by a
per-study lock; different studies proceed in parallel.
"""

from __future__ import annotations

import logging
import threading
from collections import Counter
from pathlib import Path

import numpy as np

from backend.api.errors import (
    InvalidConfigError,
    InvalidMeasurementError,
    InvalidStateError,
    MeasurementOrderError,
    StoreWriteError,
    StudyConflictError,
    StudyNotFoundError,
    TrialNotFoundError,
)
from backend.api.messages import (
    Ack,
    DeferSignal,
    EarlyStops,
    RecoveryReport,
    StudyStatus,
    TrialAssignment,
    TrialList,
)
from backend.config import DATA_DIR, DEFER_RETRY_SECONDS
from backend.evolution.engine import Defer, EvolutionEngine
from backend.evolution.selection import last_complete_generation
from backend.models.study import Measurement, StudyConfig, Trial
from backend.models.validation import validate_study_config
from backend.store.checkpoints import checkpoint_exists
from backend.store.study_log import StudyLog, StudyRecord, UnknownStudyError

logger = logging.getLogger("pbt.service")
audit = logging.getLogger("pbt.audit")


class PBTService:
    """Transactional suggestion, measurement ingestion, completion and recovery."""

    def __init__(
        self,
        data_dir: str | Path = DATA_DIR,
        defer_retry_seconds: float = DEFER_RETRY_SECONDS,
        fsync: bool = True,
    ) -> None:
        self.data_dir = Path(data_dir)
        self.defer_retry_seconds = defer_retry_seconds
        self._log = StudyLog(self.data_dir, fsync=fsync)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    @property
    def log(self) -> StudyLog:
        return self._log

    # ── Studies ───────────────────────────────────────────────────────

    def create_study(self, config: StudyConfig) -> StudyStatus:
        violations = validate_study_config(config)
        if violations:
            raise InvalidConfigError(
                f"{len(violations)} violation(s) in study config",
                violations=[v.model_dump() for v in violations],
            )
        with self._study_lock(config.study_id):
            if self._log.exists(config.study_id):
                existing = self.load_record(config.study_id)
                if existing.config != config:
                    raise StudyConflictError(
                        f"study {config.study_id!r} exists with a different config",
                    )
                return self._status(existing)
            try:
                self._log.create(config)
            except FileExistsError:
                raise StudyConflictError(f"study {config.study_id!r} already exists") from None
            except OSError as exc:
                raise StoreWriteError(str(exc)) from exc
            record = self.load_record(config.study_id)
        logger.info(
            "Created study %s (population=%d, budget=%d%s)",
            config.study_id, config.population_size, config.worker_budget,
            ", budget mode" if config.budget_mode else "",
        )
        return self._status(record)

    def get_study(self, study_id: str) -> StudyStatus:
        return self._status(self.load_record(study_id))

    def list_trials(self, study_id: str) -> TrialList:
        record = self.load_record(study_id)
        return TrialList(study_id=study_id, trials=sorted(record.trials, key=lambda t: t.trial_id))

    def load_record(self, study_id: str) -> StudyRecord:
        try:
            return self._log.load(study_id)
        except UnknownStudyError:
            raise StudyNotFoundError(f"unknown study {study_id!r}") from None

    # ── Suggestion ────────────────────────────────────────────────────

    def request_trial(self, study_id: str, worker_id: str) -> TrialAssignment:
        with self._study_lock(study_id):
            record = self.load_record(study_id)
            engine = EvolutionEngine(record.config)
            rng = np.random.default_rng([record.config.seed, record.rng_cursor])
            suggestion = engine.get_new_suggestion(record.trials, rng)

            if isinstance(suggestion, Defer):
                logger.debug("Study %s defers %s: %s", study_id, worker_id, suggestion.reason)
                return TrialAssignment(defer=DeferSignal(
                    retry_after_seconds=self.defer_retry_seconds,
                    study_complete=suggestion.study_complete,
                    reason=suggestion.reason,
                ))

            child = suggestion.child.model_copy(update={"worker_id": worker_id})
            tournament = suggestion.tournament_record
            self._append(
                study_id,
                "trial_suggested",
                trial=child.model_dump(mode="json"),
                rng_cursor=record.rng_cursor + 1,
                tournament=tournament.model_dump(mode="json") if tournament else None,
            )
        logger.info(
            "Study %s: trial %d (gen %d, parent %s) -> %s",
            study_id, child.trial_id, child.generation, child.parent_trial_id, worker_id,
        )
        return TrialAssignment(trial=child)

    # ── Measurements and completion ───────────────────────────────────

    def report_measurement(
        self, study_id: str, trial_id: int, measurement: Measurement,
    ) -> Ack:
        with self._study_lock(study_id):
            record = self.load_record(study_id)
            trial = self._trial(record, trial_id)
            if trial.status != "pending":
                raise InvalidStateError(f"trial {trial_id} is {trial.status}, not pending")
            expected = len(record.config.objective_directions)
            if len(measurement.objectives) != expected:
                raise InvalidMeasurementError(
                    f"expected {expected} objective value(s), got {len(measurement.objectives)}",
                )
            if trial.measurements and measurement.step <= trial.measurements[-1].step:
                raise MeasurementOrderError(
                    f"step {measurement.step} does not follow step {trial.measurements[-1].step}",
                )
            self._append(
                study_id,
                "measurement_reported",
                trial_id=trial_id,
                measurement=measurement.model_dump(mode="json"),
            )
        return Ack(study_id=study_id, trial_id=trial_id, trial_status="pending")

    def complete_trial(self, study_id: str, trial_id: int, final_checkpoint_path: str) -> Ack:
        with self._study_lock(study_id):
            record = self.load_record(study_id)
            trial = self._trial(record, trial_id)
            if trial.status == "completed":
                return Ack(
                    study_id=study_id, trial_id=trial_id, trial_status="completed",
                    completion_index=trial.completion_index,
                )
            if trial.status == "stopped":
                raise InvalidStateError(f"trial {trial_id} is stopped")
            if not trial.measurements:
                raise InvalidStateError(f"trial {trial_id} has no measurements")

            if not checkpoint_exists(final_checkpoint_path):
                audit.warning(
                    "Study %s: trial %d completed with checkpoint %s absent from the store",
                    study_id, trial_id, final_checkpoint_path,
                )
            index = record.completion_counter
            self._append(
                study_id,
                "trial_completed",
                trial_id=trial_id,
                final_checkpoint_path=final_checkpoint_path,
                completion_index=index,
            )
        logger.info("Study %s: trial %d completed (index %d)", study_id, trial_id, index)
        return Ack(
            study_id=study_id, trial_id=trial_id, trial_status="completed",
            completion_index=index,
        )

    # ── Stopping and recovery ─────────────────────────────────────────

    def stop_trial(self, study_id: str, trial_id: int, reason: str = "requested") -> Ack:
        with self._study_lock(study_id):
            record = self.load_record(study_id)
            trial = self._trial(record, trial_id)
            if trial.status == "stopped":
                return Ack(
                    study_id=study_id, trial_id=trial_id, trial_status="stopped",
                    completion_index=trial.completion_index,
                )
            if trial.status == "completed":
                raise InvalidStateError(f"trial {trial_id} is already completed")
            index = record.completion_counter
            self._append(
                study_id, "trial_stopped",
                trial_id=trial_id, completion_index=index, reason=reason,
            )
        audit.warning("Study %s: trial %d stopped (%s)", study_id, trial_id, reason)
        return Ack(
            study_id=study_id, trial_id=trial_id, trial_status="stopped",
            completion_index=index,
        )

    def poll_early_stops(self, study_id: str) -> EarlyStops:
        record = self.load_record(study_id)
        trial_ids = EvolutionEngine(record.config).get_early_stopping_trials(record.trials)
        return EarlyStops(study_id=study_id, trial_ids=trial_ids)

    def recover_study(self, study_id: str) -> RecoveryReport:
        """Mark every pending trial stopped so the study can resume from history."""
        with self._study_lock(study_id):
            record = self.load_record(study_id)
            pending = sorted(t.trial_id for t in record.trials if t.status == "pending")
            counter = record.completion_counter
            for trial_id in pending:
                self._append(
                    study_id, "trial_stopped",
                    trial_id=trial_id, completion_index=counter, reason="recovery",
                )
                counter += 1
        if pending:
            audit.warning("Study %s recovered: stopped pending trials %s", study_id, pending)
        else:
            logger.info("Study %s recovered: nothing pending", study_id)
        return RecoveryReport(study_id=study_id, stopped_trial_ids=pending)

    # ── Internals ─────────────────────────────────────────────────────

    def _study_lock(self, study_id: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._locks.get(study_id)
            if lock is None:
                lock = self._locks[study_id] = threading.Lock()
            return lock

    def _append(self, study_id: str, kind: str, **payload: object) -> None:
        try:
            self._log.append(study_id, kind, **payload)
        except OSError as exc:
            logger.error("Study %s: failed to persist %s: %s", study_id, kind, exc)
            raise StoreWriteError(f"could not persist {kind}: {exc}") from exc

    @staticmethod
    def _trial(record: StudyRecord, trial_id: int) -> Trial:
        trial = record.trial(trial_id)
        if trial is None:
            raise TrialNotFoundError(
                f"unknown trial {trial_id} in study {record.config.study_id!r}",
            )
        return trial

    def _status(self, record: StudyRecord) -> StudyStatus:
        config = record.config
        counts = Counter(t.status for t in record.trials)
        outlook = EvolutionEngine(config).get_new_suggestion(
            record.trials, np.random.default_rng([config.seed, record.rng_cursor]),
        )
        return StudyStatus(
            study_id=config.study_id,
            config=config,
            budget_mode=config.budget_mode,
            trial_counts={s: counts.get(s, 0) for s in ("pending", "completed", "stopped")},
            last_complete_generation=last_complete_generation(
                record.trials, config.population_size,
            ),
            completion_counter=record.completion_counter,
            study_complete=isinstance(outlook, Defer) and outlook.study_complete,
        )
