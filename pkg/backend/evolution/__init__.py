from backend.evolution.early_stopping import NoEarlyStopping, StalePendingPolicy, policy_for
from backend.evolution.engine import (
    Defer,
    EvolutionEngine,
    Suggestion,
    SuggestionDecision,
    TournamentRecord,
    apply_decision,
    get_new_suggestion,
)
from backend.evolution.mutation import mutate
from backend.evolution.selection import (
    binary_tournament,
    get_oldest_uninitiated,
    last_complete_generation,
    select_opponents,
)

__all__ = [
    "Defer",
    "EvolutionEngine",
    "NoEarlyStopping",
    "StalePendingPolicy",
    "Suggestion",
    "SuggestionDecision",
    "TournamentRecord",
    "apply_decision",
    "binary_tournament",
    "get_new_suggestion",
    "get_oldest_uninitiated",
    "last_complete_generation",
    "mutate",
    "policy_for",
    "select_opponents",
]
