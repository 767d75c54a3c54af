"""Append-only JSON-lines log of trial-state transitions, one file per study.

Layout: ``{data_dir}/studies/{study_id}.jsonl``. Each line is one record:

    {"seq": 1, "kind": "study_created", "config": {...}}
    {"seq": 2, "kind": "trial_suggested", "trial": {...}, "rng_cursor": 1, "tournament": {...}}
    {"seq": 3, "kind": "measurement_reported", "trial_id": 1, "measurement": {...}}
    {"seq": 4, "kind": "trial_completed", "trial_id": 1, "final_checkpoint_path": "...",
     "completion_index": 0}
    {"seq": 5, "kind": "trial_stopped", "trial_id": 2, "completion_index": 1, "reason": "..."}

Loading folds the records into a StudyRecord. Reads go through an incremental
cache that only parses bytes appended since the last read, so a fresh process
and a long-lived one always see the same persisted snapshot.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict

from backend.models.study import Measurement, StudyConfig, Trial

logger = logging.getLogger("pbt.store")

RECORD_KINDS = (
    "study_created",
    "trial_suggested",
    "measurement_reported",
    "trial_completed",
    "trial_stopped",
)


class UnknownStudyError(KeyError):
    """Raised when no log exists for a study id."""


class StudyRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    config: StudyConfig
    trials: list[Trial]
    completion_counter: int = 0
    rng_cursor: int = 0
    last_seq: int = 0

    def trial(self, trial_id: int) -> Trial | None:
        for t in self.trials:
            if t.trial_id == trial_id:
                return t
        return None


class _Fold:
    """Mutable accumulator that applies log records in order."""

    def __init__(self) -> None:
        self.config: StudyConfig | None = None
        self.trials: dict[int, Trial] = {}
        self.completion_counter = 0
        self.rng_cursor = 0
        self.last_seq = 0

    def apply(self, record: dict[str, Any]) -> None:
        kind = record.get("kind")
        self.last_seq = int(record.get("seq", self.last_seq + 1))

        if kind == "study_created":
            self.config = StudyConfig.model_validate(record["config"])
        elif kind == "trial_suggested":
            trial = Trial.model_validate(record["trial"])
            self.trials[trial.trial_id] = trial
            self.rng_cursor = int(record.get("rng_cursor", self.rng_cursor))
            if trial.initiator_parent_trial_id is not None:
                self._set_initiated(trial.initiator_parent_trial_id, True)
        elif kind == "measurement_reported":
            trial = self.trials[int(record["trial_id"])]
            measurement = Measurement.model_validate(record["measurement"])
            self.trials[trial.trial_id] = trial.model_copy(
                update={"measurements": (*trial.measurements, measurement)}
            )
        elif kind == "trial_completed":
            trial = self.trials[int(record["trial_id"])]
            self.trials[trial.trial_id] = trial.model_copy(update={
                "status": "completed",
                "final_checkpoint_path": record["final_checkpoint_path"],
                "completion_index": int(record["completion_index"]),
            })
            self.completion_counter += 1
        elif kind == "trial_stopped":
            trial = self.trials[int(record["trial_id"])]
            self.trials[trial.trial_id] = trial.model_copy(update={
                "status": "stopped",
                "completion_index": int(record["completion_index"]),
            })
            self.completion_counter += 1
            # A stopped child gives its initiator the reproduction back.
            if trial.initiator_parent_trial_id is not None:
                self._set_initiated(trial.initiator_parent_trial_id, False)
        else:
            logger.warning("Skipping unknown record kind %r (seq %s)", kind, record.get("seq"))

    def _set_initiated(self, trial_id: int, value: bool) -> None:
        initiator = self.trials.get(trial_id)
        if initiator is not None:
            self.trials[trial_id] = initiator.model_copy(update={"initiated_reproduction": value})

    def snapshot(self) -> StudyRecord:
        assert self.config is not None
        return StudyRecord.model_construct(
            config=self.config,
            trials=list(self.trials.values()),
            completion_counter=self.completion_counter,
            rng_cursor=self.rng_cursor,
            last_seq=self.last_seq,
        )


def fold_records(records: list[dict[str, Any]]) -> StudyRecord:
    """Rebuild a StudyRecord from its full record list."""
    fold = _Fold()
    for record in records:
        fold.apply(record)
    if fold.config is None:
        raise ValueError("log has no study_created record")
    return fold.snapshot()


@dataclass
class _CacheEntry:
    inode: int
    offset: int = 0
    fold: _Fold = field(default_factory=_Fold)
    records: list[dict[str, Any]] = field(default_factory=list)


class StudyLog:
    """Per-study append-only logs under ``{data_dir}/studies``."""

    def __init__(self, data_dir: str | Path, fsync: bool = True) -> None:
        self._dir = Path(data_dir) / "studies"
        self._dir.mkdir(parents=True, exist_ok=True)
        self._fsync = fsync
        self._cache: dict[str, _CacheEntry] = {}
        self._lock = threading.Lock()

    # ── Paths ─────────────────────────────────────────────────────────

    def path(self, study_id: str) -> Path:
        return self._dir / f"{study_id}.jsonl"

    def exists(self, study_id: str) -> bool:
        return self.path(study_id).exists()

    def study_ids(self) -> list[str]:
        return sorted(p.stem for p in self._dir.glob("*.jsonl"))

    # ── Writing ───────────────────────────────────────────────────────

    def create(self, config: StudyConfig) -> None:
        """Write the study_created record. Fails if the log already exists."""
        line = _encode({"seq": 1, "kind": "study_created", "config": config.model_dump(mode="json")})
        with open(self.path(config.study_id), "xb") as f:
            f.write(line)
            self._flush(f)
        logger.info("Created study log %s", self.path(config.study_id))

    def append(self, study_id: str, kind: str, **payload: Any) -> dict[str, Any]:
        """Append one record and return it (with its assigned seq)."""
        if kind not in RECORD_KINDS:
            raise ValueError(f"unknown record kind {kind!r}")
        with self._lock:
            entry = self._sync(study_id)
            record = {"seq": entry.fold.last_seq + 1, "kind": kind, **payload}
            path = self.path(study_id)
            with open(path, "r+b") as f:
                f.seek(0, os.SEEK_END)
                if f.tell() > 0:
                    f.seek(-1, os.SEEK_END)
                    if f.read(1) != b"\n":
                        # Torn write from a crash; start a fresh line.
                        f.write(b"\n")
                f.write(_encode(record))
                self._flush(f)
            return record

    def _flush(self, f: Any) -> None:
        f.flush()
        if self._fsync:
            os.fsync(f.fileno())

    # ── Reading ───────────────────────────────────────────────────────

    def load(self, study_id: str) -> StudyRecord:
        with self._lock:
            return self._sync(study_id).fold.snapshot()

    def read_records(self, study_id: str) -> list[dict[str, Any]]:
        with self._lock:
            return list(self._sync(study_id).records)

    def _sync(self, study_id: str) -> _CacheEntry:
        path = self.path(study_id)
        try:
            st = path.stat()
        except FileNotFoundError:
            self._cache.pop(study_id, None)
            raise UnknownStudyError(study_id) from None

        entry = self._cache.get(study_id)
        if entry is None or entry.inode != st.st_ino or st.st_size < entry.offset:
            entry = _CacheEntry(inode=st.st_ino)
            self._cache[study_id] = entry
        if st.st_size == entry.offset:
            return entry

        with open(path, "rb") as f:
            f.seek(entry.offset)
            chunk = f.read()
        end = chunk.rfind(b"\n")
        if end < 0:
            return entry
        for raw in chunk[: end + 1].splitlines():
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError:
                logger.warning("Skipping torn record in %s", path)
                continue
            entry.records.append(record)
            entry.fold.apply(record)
        entry.offset += end + 1
        if entry.fold.config is None:
            raise UnknownStudyError(study_id)
        return entry


def _encode(record: dict[str, Any]) -> bytes:
    return (json.dumps(record, separators=(",", ":"), sort_keys=True) + "\n").encode("utf-8")
