"""Helpers for walking the parameter DAG."""

from __future__ import annotations

from collections.abc import Iterator

from backend.models.study import HParams, HParamValue, ParameterSpec


def guard_matches(value: HParamValue | None, guard: HParamValue) -> bool:
    if value is None:
        return False
    if isinstance(value, str) or isinstance(guard, str):
        return value == guard
    return float(value) == float(guard)


def active_specs(specs: list[ParameterSpec], hparams: HParams) -> Iterator[ParameterSpec]:
    """Yield the specs made active by *hparams*, depth first in declaration order."""
    for spec in specs:
        yield spec
        value = hparams.get(spec.name)
        for child in spec.children:
            if guard_matches(value, child.guard_value):
                yield from active_specs([child.spec], hparams)


def iter_all_specs(specs: list[ParameterSpec]) -> Iterator[ParameterSpec]:
    for spec in specs:
        yield spec
        yield from iter_all_specs([child.spec for child in spec.children])


def value_in_domain(spec: ParameterSpec, value: HParamValue) -> bool:
    if spec.kind == "categorical":
        return spec.feasible_values is not None and value in spec.feasible_values
    if isinstance(value, str):
        return False
    if spec.kind == "discrete":
        return spec.feasible_values is not None and any(
            not isinstance(v, str) and float(v) == float(value) for v in spec.feasible_values
        )
    if spec.bounds is None:
        return False
    if spec.kind == "integer" and float(value) != int(value):
        return False
    return spec.lower() <= float(value) <= spec.upper()


def assignment_violations(specs: list[ParameterSpec], hparams: HParams) -> list[str]:
    """Names of problems with *hparams* against the search space; empty when valid."""
    problems: list[str] = []
    active = list(active_specs(specs, hparams))
    active_names = {spec.name for spec in active}
    for spec in active:
        if spec.name not in hparams:
            problems.append(f"{spec.name}: missing value for active parameter")
        elif not value_in_domain(spec, hparams[spec.name]):
            problems.append(f"{spec.name}: value {hparams[spec.name]!r} outside domain")
    for name in hparams:
        if name not in active_names:
            problems.append(f"{name}: value given for inactive or unknown parameter")
    return problems
