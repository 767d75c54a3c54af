"""Service error hierarchy.

Every error carries an HTTP status, a machine-readable reason and whether the
caller may retry. The HTTP layer serializes them; the client rebuilds them from
the response body so worker code handles one family of exceptions whether it
talks to the service in process or over the wire.
"""

from __future__ import annotations

from typing import Any


class PBTServiceError(Exception):
    """Base class for every service-level failure."""

    status_code: int = 500
    reason: str = "internal"
    retryable: bool = False

    def __init__(self, message: str, **extra: Any) -> None:
        self.message = message
        self.extra = extra
        super().__init__(f"{self.reason}: {message}")

    def to_body(self) -> dict[str, Any]:
        return {
            "status": "error",
            "reason": self.reason,
            "message": self.message,
            "retryable": self.retryable,
            **self.extra,
        }


class StudyNotFoundError(PBTServiceError):
    status_code = 404
    reason = "not_found"


class TrialNotFoundError(PBTServiceError):
    status_code = 404
    reason = "not_found"


class InvalidConfigError(PBTServiceError):
    status_code = 422
    reason = "invalid_config"


class StudyConflictError(PBTServiceError):
    status_code = 409
    reason = "conflict"


class InvalidStateError(PBTServiceError):
    status_code = 409
    reason = "invalid_state"


class MeasurementOrderError(PBTServiceError):
    status_code = 409
    reason = "ordering"


class InvalidMeasurementError(PBTServiceError):
    status_code = 422
    reason = "invalid_measurement"


class StoreWriteError(PBTServiceError):
    status_code = 503
    reason = "store_unavailable"
    retryable = True


_BY_REASON: dict[str, type[PBTServiceError]] = {
    cls.reason: cls
    for cls in (
        StudyNotFoundError,
        InvalidConfigError,
        StudyConflictError,
        InvalidStateError,
        MeasurementOrderError,
        InvalidMeasurementError,
        StoreWriteError,
    )
}


class PBTAPIError(PBTServiceError):
    """Raised by the HTTP client for failures without a known reason."""

    def __init__(
        self, status_code: int, message: str, reason: str = "http_error", retryable: bool = False,
    ) -> None:
        self.status_code = status_code
        self.reason = reason
        self.retryable = retryable
        super().__init__(message)


def error_from_body(status_code: int, body: dict[str, Any]) -> PBTServiceError:
    """Rebuild the service exception described by an error response body."""
    reason = str(body.get("reason", ""))
    message = str(body.get("message", body))
    extra = {
        k: v for k, v in body.items()
        if k not in ("status", "reason", "message", "retryable")
    }
    cls = _BY_REASON.get(reason)
    if cls is None:
        return PBTAPIError(
            status_code, message, reason=reason or "http_error",
            retryable=bool(body.get("retryable", status_code >= 500)),
        )
    return cls(message, **extra)
