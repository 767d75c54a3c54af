from backend.worker.problems import (
    NonFiniteStateError,
    ToyProblem,
    ToyProblemSpec,
    toy_train_step,
)
from backend.worker.restore import RestoreReport, smart_restore
from backend.worker.trainer import TrialSession, Worker, WorkerSummary

__all__ = [
    "NonFiniteStateError",
    "RestoreReport",
    "ToyProblem",
    "ToyProblemSpec",
    "TrialSession",
    "Worker",
    "WorkerSummary",
    "smart_restore",
    "toy_train_step",
]
