from backend.models.fitness import Comparison, FitnessContractError, compare_fitness
from backend.models.sampling import sample_hparams
from backend.models.study import (
    ChildSpec,
    Fitness,
    HParams,
    Measurement,
    ParameterSpec,
    ReplayEntry,
    ReplayPlan,
    StudyConfig,
    Trial,
)
from backend.models.validation import Violation, validate_study_config

__all__ = [
    "ChildSpec",
    "Comparison",
    "Fitness",
    "FitnessContractError",
    "HParams",
    "Measurement",
    "ParameterSpec",
    "ReplayEntry",
    "ReplayPlan",
    "StudyConfig",
    "Trial",
    "Violation",
    "compare_fitness",
    "sample_hparams",
    "validate_study_config",
]
