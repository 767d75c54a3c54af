"""FastAPI server exposing the PBT trial lifecycle.

One POST endpoint per wire message kind; bodies and responses are the models
in backend.api.messages.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from backend.api.errors import PBTServiceError
from backend.api.messages import (
    Ack,
    CompleteTrialRequest,
    CreateStudyRequest,
    EarlyStops,
    RecoveryReport,
    ReportMeasurementRequest,
    RequestTrialRequest,
    StopTrialRequest,
    StudyRequest,
    StudyStatus,
    TrialAssignment,
    TrialList,
)
from backend.api.service import PBTService
from backend.config import DATA_DIR, DEFER_RETRY_SECONDS

logger = logging.getLogger("pbt.api")


def create_app(
    data_dir: str | Path = DATA_DIR,
    service: PBTService | None = None,
) -> FastAPI:
    app = FastAPI(title="PBT Service", version="0.1.0")
    svc = service or PBTService(data_dir, defer_retry_seconds=DEFER_RETRY_SECONDS)
    app.state.service = svc

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    # ── Error mapping ─────────────────────────────────────────────

    @app.exception_handler(PBTServiceError)
    def service_error(_request: Request, exc: PBTServiceError) -> JSONResponse:
        if exc.status_code >= 500:
            logger.error("%s", exc)
        else:
            logger.info("Rejected: %s", exc)
        return JSONResponse(status_code=exc.status_code, content=exc.to_body())

    # ── Health ────────────────────────────────────────────────────

    @app.get("/api/health")
    def health() -> dict[str, Any]:
        return {
            "status": "ok",
            "data_dir": str(svc.data_dir),
            "studies": len(svc.log.study_ids()),
        }

    # ── Studies ───────────────────────────────────────────────────

    @app.post("/api/create-study")
    def create_study(req: CreateStudyRequest) -> StudyStatus:
        return svc.create_study(req.config)

    @app.post("/api/get-study")
    def get_study(req: StudyRequest) -> StudyStatus:
        return svc.get_study(req.study_id)

    @app.post("/api/list-trials")
    def list_trials(req: StudyRequest) -> TrialList:
        return svc.list_trials(req.study_id)

    # ── Trial lifecycle ───────────────────────────────────────────

    @app.post("/api/request-trial")
    def request_trial(req: RequestTrialRequest) -> TrialAssignment:
        return svc.request_trial(req.study_id, req.worker_id)

    @app.post("/api/report-measurement")
    def report_measurement(req: ReportMeasurementRequest) -> Ack:
        return svc.report_measurement(req.study_id, req.trial_id, req.measurement)

    @app.post("/api/complete-trial")
    def complete_trial(req: CompleteTrialRequest) -> Ack:
        return svc.complete_trial(req.study_id, req.trial_id, req.final_checkpoint_path)

    @app.post("/api/stop-trial")
    def stop_trial(req: StopTrialRequest) -> Ack:
        return svc.stop_trial(req.study_id, req.trial_id, req.reason)

    # ── Early stopping and recovery ───────────────────────────────

    @app.post("/api/poll-early-stops")
    def poll_early_stops(req: StudyRequest) -> EarlyStops:
        return svc.poll_early_stops(req.study_id)

    @app.post("/api/recover-study")
    def recover_study(req: StudyRequest) -> RecoveryReport:
        return svc.recover_study(req.study_id)

    return app
