"""Name-matched checkpoint restore."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from backend.store.checkpoints import Checkpoint


@dataclass(frozen=True)
class RestoreReport:
    matched: tuple[str, ...] = ()
    shape_mismatched: tuple[str, ...] = ()
    missing: tuple[str, ...] = ()
    # In the checkpoint but not in the model.
    unused: tuple[str, ...] = ()

    @property
    def exact(self) -> bool:
        return not (self.shape_mismatched or self.missing or self.unused)


def smart_restore(
    checkpoint: Checkpoint, model_variables: Mapping[str, np.ndarray],
) -> tuple[dict[str, np.ndarray], RestoreReport]:
    """Restore every model variable whose name and shape match the checkpoint.

    *model_variables* holds the freshly initialized values; variables that
    cannot be restored keep them. Mismatches are reported, never raised.
    """
    restored: dict[str, np.ndarray] = {}
    matched: list[str] = []
    mismatched: list[str] = []
    missing: list[str] = []
    for name in sorted(model_variables):
        fresh = model_variables[name]
        saved = checkpoint.variables.get(name)
        if saved is None:
            missing.append(name)
            restored[name] = np.array(fresh, copy=True)
        elif saved.shape != np.shape(fresh):
            mismatched.append(name)
            restored[name] = np.array(fresh, copy=True)
        else:
            matched.append(name)
            restored[name] = np.array(saved, copy=True)
    unused = sorted(set(checkpoint.variables) - set(model_variables))
    report = RestoreReport(
        matched=tuple(matched),
        shape_mismatched=tuple(mismatched),
        missing=tuple(missing),
        unused=tuple(unused),
    )
    return restored, report
