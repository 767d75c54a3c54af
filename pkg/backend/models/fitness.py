"""Fitness tuple comparison.

Values are normalized to a maximize convention before comparing (minimize
objectives are negated). Missing elements never win: in priority mode a missing
element loses to a present one, in dominance mode a tuple with a missing element
is incomparable to everything.
"""

from __future__ import annotations

from typing import Literal

from backend.models.study import Fitness, FitnessMode

Comparison = Literal["a_better", "b_better", "incomparable"]


class FitnessContractError(ValueError):
    """Raised when two fitness tuples cannot be compared at all."""


def _normalized(fitness: Fitness) -> list[float | None]:
    return [
        None if value is None else (value if direction == "maximize" else -value)
        for value, direction in zip(fitness.values, fitness.directions)
    ]


def compare_fitness(
    a: Fitness,
    b: Fitness,
    mode: FitnessMode,
    weak_dominance: bool = False,
) -> Comparison:
    if len(a.values) != len(b.values) or a.directions != b.directions:
        raise FitnessContractError(
            f"fitness tuples differ in shape: {len(a.values)} vs {len(b.values)} values"
        )
    if len(a.directions) != len(a.values):
        raise FitnessContractError("fitness values and directions differ in length")

    na, nb = _normalized(a), _normalized(b)
    if mode == "priority":
        return _compare_priority(na, nb)
    return _compare_dominance(na, nb, weak_dominance)


def _compare_priority(na: list[float | None], nb: list[float | None]) -> Comparison:
    for x, y in zip(na, nb):
        if x is None and y is None:
            continue
        if x is None:
            return "b_better"
        if y is None:
            return "a_better"
        if x > y:
            return "a_better"
        if y > x:
            return "b_better"
    return "incomparable"


def _compare_dominance(
    na: list[float | None], nb: list[float | None], weak: bool,
) -> Comparison:
    if any(x is None for x in na) or any(y is None for y in nb):
        return "incomparable"
    xs = [float(x) for x in na if x is not None]
    ys = [float(y) for y in nb if y is not None]
    if _dominates(xs, ys, weak):
        return "a_better"
    if _dominates(ys, xs, weak):
        return "b_better"
    return "incomparable"


def _dominates(xs: list[float], ys: list[float], weak: bool) -> bool:
    if weak:
        return all(x >= y for x, y in zip(xs, ys)) and any(x > y for x, y in zip(xs, ys))
    return all(x > y for x, y in zip(xs, ys))
