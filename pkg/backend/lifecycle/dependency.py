"""Trial dependency graph: the warm-start ancestry of a set of target trials."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from backend.models.study import Trial


class InvalidTargetError(ValueError):
    """A replay target is unknown or not completed."""


class IncompleteLineageError(ValueError):
    """An ancestor needed for replay is missing or never completed."""


@dataclass(frozen=True)
class DependencyGraph:
    nodes: frozenset[int]
    # child -> parent (warm-start dependency)
    edges: dict[int, int]
    execution_order: tuple[int, ...]

    def parent(self, trial_id: int) -> int | None:
        return self.edges.get(trial_id)

    @property
    def roots(self) -> list[int]:
        return [n for n in self.execution_order if n not in self.edges]


def extract_dependency_graph(targets: list[int], trials: list[Trial]) -> DependencyGraph:
    """Ancestor closure of *targets*, topologically ordered.

    Ties between ready nodes go to the earliest-suggested trial (lowest id).
    """
    by_id = {t.trial_id: t for t in trials}
    for target in targets:
        trial = by_id.get(target)
        if trial is None:
            raise InvalidTargetError(f"unknown target trial {target}")
        if trial.status != "completed":
            raise InvalidTargetError(f"target trial {target} is {trial.status}")

    nodes: set[int] = set()
    edges: dict[int, int] = {}
    stack = list(targets)
    while stack:
        trial_id = stack.pop()
        if trial_id in nodes:
            continue
        trial = by_id.get(trial_id)
        if trial is None:
            raise IncompleteLineageError(f"no record of ancestor trial {trial_id}")
        if trial.status != "completed":
            raise IncompleteLineageError(f"ancestor trial {trial_id} is {trial.status}")
        nodes.add(trial_id)
        if trial.parent_trial_id is not None:
            edges[trial_id] = trial.parent_trial_id
            stack.append(trial.parent_trial_id)

    return DependencyGraph(
        nodes=frozenset(nodes),
        edges=edges,
        execution_order=tuple(_topological_order(nodes, edges)),
    )


def _topological_order(nodes: set[int], edges: dict[int, int]) -> list[int]:
    children: dict[int, list[int]] = {n: [] for n in nodes}
    in_degree = {n: 0 for n in nodes}
    for child, parent in edges.items():
        children[parent].append(child)
        in_degree[child] += 1

    ready = [n for n in nodes if in_degree[n] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for child in children[node]:
            in_degree[child] -= 1
            if in_degree[child] == 0:
                heapq.heappush(ready, child)

    if len(order) != len(nodes):
        raise IncompleteLineageError("warm-start lineage contains a cycle")
    return order
