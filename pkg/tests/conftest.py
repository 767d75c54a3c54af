from __future__ import annotations

from collections.abc import Callable
from pathlib import Path
from typing import Any

import pytest

from backend.api.service import PBTService
from backend.models.study import Measurement, ParameterSpec, StudyConfig, Trial
from backend.pbt_client import LocalServiceClient
from backend.worker.problems import ToyProblemSpec

LR_SPEC = ParameterSpec(name="lr", kind="float", bounds=(1e-3, 1.0), scale="log")


def make_config(**overrides: Any) -> StudyConfig:
    fields: dict[str, Any] = {
        "study_id": "s1",
        "specs": [LR_SPEC],
        "population_size": 4,
        "worker_budget": 4,
        "steps_per_trial": 400,
        "seed": 7,
    }
    fields.update(overrides)
    return StudyConfig(**fields)


def make_trial(
    trial_id: int,
    generation: int = 0,
    status: str = "completed",
    objective: float | None = 1.0,
    completion_index: int | None = None,
    **overrides: Any,
) -> Trial:
    measurements: tuple[Measurement, ...] = ()
    if objective is not None:
        measurements = (
            Measurement(step=200, objectives=(objective,), checkpoint_path=f"ck/{trial_id}"),
        )
    fields: dict[str, Any] = {
        "trial_id": trial_id,
        "study_id": "s1",
        "hparams": {"lr": 0.1},
        "generation": generation,
        "status": status,
        "measurements": measurements,
        "final_checkpoint_path": f"ck/{trial_id}" if status == "completed" else None,
        "completion_index": (
            completion_index if completion_index is not None
            else (trial_id if status != "pending" else None)
        ),
    }
    fields.update(overrides)
    return Trial(**fields)


@pytest.fixture
def config_factory() -> Callable[..., StudyConfig]:
    return make_config


@pytest.fixture
def service(tmp_path: Path) -> PBTService:
    return PBTService(tmp_path, defer_retry_seconds=0, fsync=False)


@pytest.fixture
def client(service: PBTService) -> LocalServiceClient:
    return LocalServiceClient(service)


@pytest.fixture
def quadratic() -> ToyProblemSpec:
    return ToyProblemSpec(kind="lr_quadratic", dimension=4, eval_every=200)
