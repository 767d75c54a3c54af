"""Generation bookkeeping, initiator and opponent selection, binary tournament."""

from __future__ import annotations

from collections import Counter

import numpy as np

from backend.models.fitness import compare_fitness
from backend.models.study import Direction, Fitness, FitnessMode, OpponentStrategy, Trial


def completed_per_generation(trials: list[Trial]) -> Counter[int]:
    return Counter(t.generation for t in trials if t.status == "completed")


def last_complete_generation(trials: list[Trial], population_size: int) -> int:
    """Largest g such that every generation up to g has population_size completed
    trials; -1 while the seed generation is still filling."""
    counts = completed_per_generation(trials)
    g = -1
    while counts.get(g + 1, 0) >= population_size:
        g += 1
    return g


def can_initiate(trial: Trial, max_generations: int | None) -> bool:
    if trial.status != "completed" or trial.initiated_reproduction:
        return False
    return max_generations is None or trial.generation < max_generations - 1


def get_oldest_uninitiated(
    trials: list[Trial], max_generations: int | None = None,
) -> Trial | None:
    """Oldest completed trial that has not initiated a reproduction.

    Age is (generation, completion index, trial id). Returns None when nothing
    is eligible; the caller defers.
    """
    candidates = [t for t in trials if can_initiate(t, max_generations)]
    if not candidates:
        return None
    return min(candidates, key=lambda t: t.order_key)


def select_opponents(
    initiator: Trial,
    trials: list[Trial],
    strategy: OpponentStrategy,
    k: int,
) -> list[Trial]:
    """Completed trials the initiator may compete against, ordered by trial id.

    past_generation keeps the k generations ending at the initiator's own.
    """
    pool = [
        t for t in trials
        if t.status == "completed" and t.trial_id != initiator.trial_id
    ]
    g = initiator.generation
    if strategy == "past_generation":
        pool = [t for t in pool if g - k + 1 <= t.generation <= g]
    elif strategy == "same_generation":
        pool = [t for t in pool if t.generation == g]
    return sorted(pool, key=lambda t: t.trial_id)


def binary_tournament(
    initiator: Trial,
    opponents: list[Trial],
    mode: FitnessMode,
    directions: list[Direction],
    rng: np.random.Generator,
    weak_dominance: bool = False,
) -> tuple[Trial, Trial | None]:
    """Pick one opponent uniformly and return (winner, opponent).

    Ties and incomparable fitness go to the initiator. With no opponents the
    initiator wins by default and no random draw is made.
    """
    initiator_fitness = Fitness.of_trial(initiator, directions)
    if not opponents:
        return initiator, None

    opponent = opponents[int(rng.integers(len(opponents)))]
    outcome = compare_fitness(
        initiator_fitness,
        Fitness.of_trial(opponent, directions),
        mode,
        weak_dominance=weak_dominance,
    )
    if outcome == "b_better":
        return opponent, opponent
    return initiator, opponent
