"""Reproduction by mutation.

Floats are scaled by 0.8 or 1.2, integers and discrete values step to a
neighbour, categoricals are re-sampled. Immutable parameters pass through.
Children that become active are sampled fresh; children that go inactive are
dropped.
"""

from __future__ import annotations

import bisect

import numpy as np

from backend.config import MUTATION_FACTORS
from backend.models.sampling import sample_into, sample_value
from backend.models.search_space import guard_matches
from backend.models.study import HParams, HParamValue, MutationBoundary, ParameterSpec


def mutate(
    hparams: HParams,
    specs: list[ParameterSpec],
    rng: np.random.Generator,
    boundary: MutationBoundary = "clamp",
) -> HParams:
    out: HParams = {}
    _mutate_into(specs, hparams, rng, out, boundary)
    return out


def _mutate_into(
    specs: list[ParameterSpec],
    old: HParams,
    rng: np.random.Generator,
    out: HParams,
    boundary: MutationBoundary,
) -> None:
    for spec in specs:
        if spec.name not in old:
            value = sample_value(spec, rng)
        elif spec.mutable:
            value = mutate_value(spec, old[spec.name], rng, boundary)
        else:
            value = old[spec.name]
        out[spec.name] = value

        for child in spec.children:
            if not guard_matches(value, child.guard_value):
                continue
            if guard_matches(old.get(spec.name), child.guard_value):
                _mutate_into([child.spec], old, rng, out, boundary)
            else:
                sample_into([child.spec], rng, out)


def mutate_value(
    spec: ParameterSpec,
    value: HParamValue,
    rng: np.random.Generator,
    boundary: MutationBoundary = "clamp",
) -> HParamValue:
    if spec.kind == "categorical":
        return sample_value(spec, rng)

    if spec.kind == "float":
        lo, hi = spec.lower(), spec.upper()
        pick = int(rng.integers(2))
        scaled = float(value) * MUTATION_FACTORS[pick]
        if boundary == "redraw" and not lo <= scaled <= hi:
            scaled = float(value) * MUTATION_FACTORS[1 - pick]
        return min(max(scaled, lo), hi)

    step = 1 if int(rng.integers(2)) == 1 else -1
    if spec.kind == "integer":
        moved = int(value) + step
        return moved if spec.lower() <= moved <= spec.upper() else int(value)

    # discrete
    values = [float(v) for v in spec.feasible_values or []]
    index = _nearest_index(values, float(value))
    target = index + step
    if 0 <= target < len(values):
        return (spec.feasible_values or [])[target]
    return (spec.feasible_values or [])[index]


def _nearest_index(values: list[float], value: float) -> int:
    pos = bisect.bisect_left(values, value)
    if pos < len(values) and values[pos] == value:
        return pos
    candidates = [i for i in (pos - 1, pos) if 0 <= i < len(values)]
    return min(candidates, key=lambda i: abs(values[i] - value))
