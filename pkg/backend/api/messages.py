"""Wire messages: one request body per endpoint, plus the response payloads.

Field names are exactly the study-model field names, so the study log, the
HTTP bodies and config files share one schema.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from backend.models.study import Measurement, StudyConfig, Trial, TrialStatus
from backend.models.validation import Violation

WireKind = Literal[
    "create_study",
    "request_trial",
    "report_measurement",
    "complete_trial",
    "stop_trial",
    "get_study",
    "list_trials",
    "poll_early_stops",
    "recover_study",
]

ENDPOINTS: dict[str, str] = {
    "create_study": "/api/create-study",
    "request_trial": "/api/request-trial",
    "report_measurement": "/api/report-measurement",
    "complete_trial": "/api/complete-trial",
    "stop_trial": "/api/stop-trial",
    "get_study": "/api/get-study",
    "list_trials": "/api/list-trials",
    "poll_early_stops": "/api/poll-early-stops",
    "recover_study": "/api/recover-study",
}


class _Message(BaseModel):
    model_config = ConfigDict(frozen=True)


# ── Requests ──────────────────────────────────────────────────────────

class CreateStudyRequest(_Message):
    config: StudyConfig

    @property
    def study_id(self) -> str:
        return self.config.study_id


class StudyRequest(_Message):
    study_id: str


class RequestTrialRequest(_Message):
    study_id: str
    worker_id: str


class ReportMeasurementRequest(_Message):
    study_id: str
    trial_id: int
    measurement: Measurement


class CompleteTrialRequest(_Message):
    study_id: str
    trial_id: int
    final_checkpoint_path: str


class StopTrialRequest(_Message):
    study_id: str
    trial_id: int
    reason: str = "requested"


# ── Responses ─────────────────────────────────────────────────────────

class DeferSignal(_Message):
    retry_after_seconds: float
    study_complete: bool = False
    reason: str = ""


class TrialAssignment(_Message):
    status: Literal["ok"] = "ok"
    trial: Trial | None = None
    defer: DeferSignal | None = None


class Ack(_Message):
    status: Literal["ok"] = "ok"
    study_id: str
    trial_id: int
    trial_status: TrialStatus
    completion_index: int | None = None


class StudyStatus(_Message):
    status: Literal["ok"] = "ok"
    study_id: str
    config: StudyConfig
    budget_mode: bool
    trial_counts: dict[str, int] = Field(default_factory=dict)
    last_complete_generation: int
    completion_counter: int
    study_complete: bool


class TrialList(_Message):
    status: Literal["ok"] = "ok"
    study_id: str
    trials: list[Trial]


class EarlyStops(_Message):
    status: Literal["ok"] = "ok"
    study_id: str
    trial_ids: list[int]


class RecoveryReport(_Message):
    status: Literal["ok"] = "ok"
    study_id: str
    stopped_trial_ids: list[int]


class ConfigRejection(_Message):
    violations: list[Violation]
