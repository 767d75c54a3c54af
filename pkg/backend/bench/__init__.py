from backend.bench.experiments import (
    continue_training,
    extract_schedule,
    opponent_ablation,
    replay_stability,
    run_comparison,
    scalability,
    sensitivity,
)
from backend.bench.plans import BenchSuite, ExperimentPlan, InvalidCutError, PlanValidationError
from backend.bench.simulation import SimulatedCluster, SimulationResult

__all__ = [
    "BenchSuite",
    "ExperimentPlan",
    "InvalidCutError",
    "PlanValidationError",
    "SimulatedCluster",
    "SimulationResult",
    "continue_training",
    "extract_schedule",
    "opponent_ablation",
    "replay_stability",
    "run_comparison",
    "scalability",
    "sensitivity",
]
