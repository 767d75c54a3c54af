"""Checkpoint store: one directory per checkpoint, one .npy file per variable.

Layout::

    {data_dir}/checkpoints/{study_id}/{trial_id}/ckpt-{global_step}/
        manifest.json
        theta.npy
        velocity.npy

manifest.json::

    {"format": 1, "study_id": "s", "trial_id": 3, "step": 1400,
     "variables": {"theta": {"file": "theta.npy", "shape": [8], "dtype": "float64"}}}

A checkpoint directory is written under a temporary name and renamed into
place, so a reader never sees a half-written checkpoint.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger("pbt.store")

MANIFEST = "manifest.json"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    path: str
    variables: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    trial_id: int | None = None

    @property
    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: tuple(v.shape) for name, v in self.variables.items()}


class CheckpointStore:
    """Reads and writes checkpoints under ``{data_dir}/checkpoints``."""

    def __init__(self, data_dir: str | Path) -> None:
        self.root = Path(data_dir) / "checkpoints"
        self.root.mkdir(parents=True, exist_ok=True)

    def checkpoint_dir(self, study_id: str, trial_id: int, step: int) -> Path:
        return self.root / study_id / str(trial_id) / f"ckpt-{step}"

    def save(
        self, study_id: str, trial_id: int, step: int, variables: dict[str, np.ndarray],
    ) -> str:
        """Write a checkpoint and return its path."""
        target = self.checkpoint_dir(study_id, trial_id, step)
        tmp = target.with_name(target.name + ".tmp")
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)

        entries: dict[str, dict[str, object]] = {}
        for name, value in variables.items():
            array = np.asarray(value)
            filename = f"{name}.npy"
            np.save(tmp / filename, array, allow_pickle=False)
            entries[name] = {
                "file": filename,
                "shape": list(array.shape),
                "dtype": str(array.dtype),
            }
        manifest = {
            "format": FORMAT_VERSION,
            "study_id": study_id,
            "trial_id": trial_id,
            "step": step,
            "variables": entries,
        }
        (tmp / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))

        if target.exists():
            shutil.rmtree(target)
        os.replace(tmp, target)
        return str(target)

    def load(self, path: str | Path) -> Checkpoint:
        directory = Path(path)
        manifest = json.loads((directory / MANIFEST).read_text())
        variables = {
            name: np.load(directory / str(entry["file"]), allow_pickle=False)
            for name, entry in manifest["variables"].items()
        }
        return Checkpoint(
            path=str(directory),
            variables=variables,
            step=int(manifest["step"]),
            trial_id=manifest.get("trial_id"),
        )

    # ── Housekeeping ──────────────────────────────────────────────────

    def list_checkpoints(self, study_id: str) -> list[str]:
        """Every complete checkpoint directory of a study."""
        study_dir = self.root / study_id
        if not study_dir.exists():
            return []
        return sorted(
            str(manifest.parent) for manifest in study_dir.glob(f"*/ckpt-*/{MANIFEST}")
        )

    def delete(self, path: str | Path) -> int:
        """Remove a checkpoint directory; returns the bytes freed."""
        directory = Path(path)
        if not directory.exists():
            return 0
        freed = sum(f.stat().st_size for f in directory.rglob("*") if f.is_file())
        shutil.rmtree(directory)
        parent = directory.parent
        if parent != self.root and not any(parent.iterdir()):
            parent.rmdir()
        return freed


def checkpoint_exists(path: str | Path | None) -> bool:
    if not path:
        return False
    return (Path(path) / MANIFEST).is_file()
