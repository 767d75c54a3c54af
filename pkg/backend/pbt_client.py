import logging
from typing import Any, Protocol

import httpx

from backend.api.errors import PBTAPIError, error_from_body
from backend.api.messages import (
    ENDPOINTS,
    Ack,
    EarlyStops,
    RecoveryReport,
    StudyStatus,
    TrialAssignment,
    TrialList,
)
from backend.api.service import PBTService
from backend.config import CLIENT_MAX_RETRIES, CLIENT_TIMEOUT, SERVICE_URL
from backend.models.study import Measurement, StudyConfig

logger = logging.getLogger("pbt.client")


class ServiceClient(Protocol):
    """The trial-lifecycle calls a worker makes, over HTTP or in process."""

    def create_study(self, config: StudyConfig) -> StudyStatus: ...

    def request_trial(self, study_id: str, worker_id: str) -> TrialAssignment: ...

    def report_measurement(
        self, study_id: str, trial_id: int, measurement: Measurement,
    ) -> Ack: ...

    def complete_trial(
        self, study_id: str, trial_id: int, final_checkpoint_path: str,
    ) -> Ack: ...

    def stop_trial(self, study_id: str, trial_id: int, reason: str = "requested") -> Ack: ...

    def get_study(self, study_id: str) -> StudyStatus: ...

    def list_trials(self, study_id: str) -> TrialList: ...

    def poll_early_stops(self, study_id: str) -> EarlyStops: ...

    def recover_study(self, study_id: str) -> RecoveryReport: ...


class PBTClient:
    """JSON-over-HTTP client for the PBT service.

    Transport-level failures are retried by the httpx transport; service
    errors are raised as the matching PBTServiceError subclass.
    """

    def __init__(
        self,
        base_url: str = SERVICE_URL,
        timeout: float = CLIENT_TIMEOUT,
        max_retries: int = CLIENT_MAX_RETRIES,
        http_client: httpx.Client | None = None,
    ) -> None:
        self._base_url = base_url.rstrip("/")
        self._timeout = timeout
        self._transport = httpx.HTTPTransport(retries=max_retries)
        self._http = http_client
        self._headers = {"Accept": "application/json"}

    def _post(self, kind: str, body: dict[str, Any]) -> dict[str, Any]:
        """POST one wire message and return the decoded success body."""
        path = ENDPOINTS[kind]
        try:
            if self._http is not None:
                response = self._http.post(path, json=body, headers=self._headers)
            else:
                url = f"{self._base_url}{path}"
                with httpx.Client(transport=self._transport, timeout=self._timeout) as client:
                    response = client.post(url, json=body, headers=self._headers)
        except httpx.TransportError as exc:
            raise PBTAPIError(0, f"{kind}: {exc}", reason="unreachable", retryable=True) from exc

        try:
            payload = response.json()
        except ValueError:
            payload = {"message": response.text}

        if response.status_code != 200:
            if isinstance(payload, dict) and "detail" in payload and "reason" not in payload:
                payload = {"reason": "bad_request", "message": str(payload["detail"])}
            raise error_from_body(response.status_code, payload)
        return payload  # type: ignore[no-any-return]

    def health(self) -> dict[str, Any]:
        path = "/api/health"
        if self._http is not None:
            response = self._http.get(path)
        else:
            with httpx.Client(transport=self._transport, timeout=self._timeout) as client:
                response = client.get(f"{self._base_url}{path}")
        if response.status_code != 200:
            raise PBTAPIError(response.status_code, response.text)
        return response.json()  # type: ignore[no-any-return]

    # ── Studies ───────────────────────────────────────────────────────

    def create_study(self, config: StudyConfig) -> StudyStatus:
        data = self._post("create_study", {"config": config.model_dump(mode="json")})
        return StudyStatus.model_validate(data)

    def get_study(self, study_id: str) -> StudyStatus:
        return StudyStatus.model_validate(self._post("get_study", {"study_id": study_id}))

    def list_trials(self, study_id: str) -> TrialList:
        return TrialList.model_validate(self._post("list_trials", {"study_id": study_id}))

    # ── Trial lifecycle ───────────────────────────────────────────────

    def request_trial(self, study_id: str, worker_id: str) -> TrialAssignment:
        data = self._post("request_trial", {"study_id": study_id, "worker_id": worker_id})
        return TrialAssignment.model_validate(data)

    def report_measurement(
        self, study_id: str, trial_id: int, measurement: Measurement,
    ) -> Ack:
        data = self._post("report_measurement", {
            "study_id": study_id,
            "trial_id": trial_id,
            "measurement": measurement.model_dump(mode="json"),
        })
        return Ack.model_validate(data)

    def complete_trial(self, study_id: str, trial_id: int, final_checkpoint_path: str) -> Ack:
        data = self._post("complete_trial", {
            "study_id": study_id,
            "trial_id": trial_id,
            "final_checkpoint_path": final_checkpoint_path,
        })
        return Ack.model_validate(data)

    def stop_trial(self, study_id: str, trial_id: int, reason: str = "requested") -> Ack:
        data = self._post("stop_trial", {
            "study_id": study_id, "trial_id": trial_id, "reason": reason,
        })
        return Ack.model_validate(data)

    # ── Early stopping and recovery ───────────────────────────────────

    def poll_early_stops(self, study_id: str) -> EarlyStops:
        return EarlyStops.model_validate(self._post("poll_early_stops", {"study_id": study_id}))

    def recover_study(self, study_id: str) -> RecoveryReport:
        data = self._post("recover_study", {"study_id": study_id})
        return RecoveryReport.model_validate(data)


class LocalServiceClient:
    """Same calls as PBTClient, dispatched straight to an in-process PBTService."""

    def __init__(self, service: PBTService) -> None:
        self.service = service

    def create_study(self, config: StudyConfig) -> StudyStatus:
        return self.service.create_study(config)

    def request_trial(self, study_id: str, worker_id: str) -> TrialAssignment:
        return self.service.request_trial(study_id, worker_id)

    def report_measurement(
        self, study_id: str, trial_id: int, measurement: Measurement,
    ) -> Ack:
        return self.service.report_measurement(study_id, trial_id, measurement)

    def complete_trial(self, study_id: str, trial_id: int, final_checkpoint_path: str) -> Ack:
        return self.service.complete_trial(study_id, trial_id, final_checkpoint_path)

    def stop_trial(self, study_id: str, trial_id: int, reason: str = "requested") -> Ack:
        return self.service.stop_trial(study_id, trial_id, reason)

    def get_study(self, study_id: str) -> StudyStatus:
        return self.service.get_study(study_id)

    def list_trials(self, study_id: str) -> TrialList:
        return self.service.list_trials(study_id)

    def poll_early_stops(self, study_id: str) -> EarlyStops:
        return self.service.poll_early_stops(study_id)

    def recover_study(self, study_id: str) -> RecoveryReport:
        return self.service.recover_study(study_id)
