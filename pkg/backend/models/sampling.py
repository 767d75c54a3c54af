"""Random sampling of hyperparameter assignments from the parameter DAG."""

from __future__ import annotations

import math

import numpy as np

from backend.models.search_space import guard_matches
from backend.models.study import HParams, HParamValue, ParameterSpec


def sample_value(spec: ParameterSpec, rng: np.random.Generator) -> HParamValue:
    """Draw one value for *spec*, ignoring its children."""
    if spec.kind == "float":
        lo, hi = spec.lower(), spec.upper()
        if spec.scale == "log":
            return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        return float(rng.uniform(lo, hi))
    if spec.kind == "integer":
        return int(rng.integers(int(spec.lower()), int(spec.upper()), endpoint=True))
    values = spec.feasible_values or []
    return values[int(rng.integers(len(values)))]


def sample_hparams(specs: list[ParameterSpec], rng: np.random.Generator) -> HParams:
    """Sample every root spec and, recursively, every child whose guard matches.

    Deterministic given the generator state; draws happen depth first in
    declaration order.
    """
    hparams: HParams = {}
    sample_into(specs, rng, hparams)
    return hparams


def sample_into(specs: list[ParameterSpec], rng: np.random.Generator, out: HParams) -> None:
    for spec in specs:
        value = sample_value(spec, rng)
        out[spec.name] = value
        for child in spec.children:
            if guard_matches(value, child.guard_value):
                sample_into([child.spec], rng, out)
