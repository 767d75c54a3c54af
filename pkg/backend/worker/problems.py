"""Toy training problems standing in for a real model.

lr_quadratic
    L(theta, t) = 1/2 * ||theta - mu(t)||^2 with mu(t) = drift.rate * t on every
    coordinate. One step: theta <- theta - lr * grad (plus optional gradient
    noise). Stable for 0 < lr < 2.

shifted_optimum
    L(theta) = 1/2 * ||theta||^2. The problem horizon is cut into phases and
    theta into as many blocks; during phase p only block p receives gradient,
    scaled by

        rate(lr) = peak_rate * exp(-(log10(lr) - c_p)^2 / (2 * width^2))

    where c_p = drift.phase_log10_lrs[p]. The default ramp steps down 0.3
    decades per phase against a width of 0.15, and a phase lasts 250 steps at
    about 8 e-folds of loss for a well-placed lr. A constant learning rate
    therefore clears its own block and little of the neighbouring ones, while
    a schedule that follows c_p clears every block. ``optimal_lr`` is that
    schedule. Past the horizon the last phase stays active.

noise_scale perturbs gradients only; the reported objective is the noiseless
loss at the end of each evaluation window.

Steps are global: a trial of generation g starts at g * steps_per_trial, so a
warm-started child continues its parent's clock.
"""

from __future__ import annotations

import math
import zlib
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from backend.config import DEFAULT_EVAL_EVERY
from backend.models.study import HParams

ProblemKind = Literal["lr_quadratic", "shifted_optimum"]


class NonFiniteStateError(ArithmeticError):
    """Raised when a training step produces NaN or infinite variables."""


class DriftSpec(BaseModel):
    """Parameters of the time-varying optimum."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    rate: float = 0.0
    horizon: int = Field(1250, gt=0)
    phase_log10_lrs: list[float] = Field(default_factory=lambda: [-1.2, -1.5, -1.8, -2.1, -2.4])
    peak_rate: float = Field(0.016, gt=0.0, le=1.0)
    width: float = Field(0.15, gt=0.0)


class ToyProblemSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ProblemKind = "lr_quadratic"
    dimension: int = Field(8, gt=0)
    noise_scale: float = Field(0.0, ge=0.0)
    drift: DriftSpec = Field(default_factory=DriftSpec)
    eval_every: int = Field(DEFAULT_EVAL_EVERY, gt=0)
    init_scale: float = 1.0

    @model_validator(mode="after")
    def _blocks_fit(self) -> ToyProblemSpec:
        if self.kind == "shifted_optimum":
            if not self.drift.phase_log10_lrs:
                raise ValueError("shifted_optimum needs at least one phase")
            if self.dimension < len(self.drift.phase_log10_lrs):
                raise ValueError("dimension must be at least the number of phases")
        return self

    def check_steps(self, steps_per_trial: int) -> None:
        if steps_per_trial % self.eval_every != 0:
            raise ValueError(
                f"eval_every={self.eval_every} does not divide steps_per_trial={steps_per_trial}",
            )


def seed_key(study_id: str, trial_id: int) -> tuple[int, int]:
    """Stable integer key for a trial's noise stream."""
    return (zlib.crc32(study_id.encode("utf-8")), trial_id)


class ToyProblem:
    """Stateless dynamics and objective for one ToyProblemSpec."""

    def __init__(self, spec: ToyProblemSpec) -> None:
        self.spec = spec
        n_phases = len(spec.drift.phase_log10_lrs) if spec.kind == "shifted_optimum" else 1
        self._blocks = np.array_split(np.arange(spec.dimension), n_phases)

    # ── Variables ─────────────────────────────────────────────────────

    def variable_shapes(self, hparams: HParams) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {"theta": (self.spec.dimension,)}
        if hparams.get("optimizer") == "momentum":
            shapes["velocity"] = (self.spec.dimension,)
        return shapes

    def init_variables(self, hparams: HParams) -> dict[str, np.ndarray]:
        variables = {"theta": np.full(self.spec.dimension, self.spec.init_scale, dtype=np.float64)}
        if "velocity" in self.variable_shapes(hparams):
            variables["velocity"] = np.zeros(self.spec.dimension, dtype=np.float64)
        return variables

    # ── Objective ─────────────────────────────────────────────────────

    def optimum(self, global_step: int) -> np.ndarray:
        if self.spec.kind == "shifted_optimum":
            return np.zeros(self.spec.dimension)
        return np.full(self.spec.dimension, self.spec.drift.rate * global_step)

    def loss(self, variables: dict[str, np.ndarray], global_step: int) -> float:
        diff = variables["theta"] - self.optimum(global_step)
        return 0.5 * float(diff @ diff)

    def phase(self, global_step: int) -> int:
        n = len(self._blocks)
        return min(n - 1, max(0, global_step) * n // self.spec.drift.horizon)

    def step_size(self, lr: float, global_step: int) -> float:
        if self.spec.kind == "lr_quadratic":
            return lr
        if lr <= 0.0:
            return 0.0
        drift = self.spec.drift
        center = drift.phase_log10_lrs[self.phase(global_step)]
        return drift.peak_rate * math.exp(-((math.log10(lr) - center) ** 2) / (2 * drift.width**2))

    def gradient(self, theta: np.ndarray, global_step: int) -> np.ndarray:
        grad = theta - self.optimum(global_step)
        if self.spec.kind == "shifted_optimum":
            mask = np.zeros_like(grad)
            mask[self._blocks[self.phase(global_step)]] = 1.0
            grad = grad * mask
        return grad

    def optimal_lr(self, global_step: int) -> float:
        """Best constant learning rate for the phase containing *global_step*."""
        if self.spec.kind == "lr_quadratic":
            return 1.0
        return float(10.0 ** self.spec.drift.phase_log10_lrs[self.phase(global_step)])

    # ── Noise ─────────────────────────────────────────────────────────

    def noise_window(self, key: tuple[int, ...], window: int) -> np.ndarray | None:
        """Gradient noise for one evaluation window, shape (eval_every, dimension)."""
        if self.spec.noise_scale == 0.0:
            return None
        rng = np.random.default_rng([*key, window])
        return self.spec.noise_scale * rng.standard_normal((self.spec.eval_every, self.spec.dimension))


def toy_train_step(
    state: dict[str, np.ndarray],
    hparams: HParams,
    step: int,
    problem: ToyProblem,
    noise: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """One optimizer step at global *step*; returns the new variable set."""
    if "lr" not in hparams:
        raise KeyError("toy_train_step needs an 'lr' hyperparameter")
    lr = float(hparams["lr"])
    grad = problem.gradient(state["theta"], step)
    if noise is not None:
        grad = grad + noise
    eta = problem.step_size(lr, step)

    new_state = dict(state)
    if "velocity" in state:
        beta = float(hparams.get("momentum", 0.9))
        velocity = beta * state["velocity"] + grad
        new_state["velocity"] = velocity
        new_state["theta"] = state["theta"] - eta * velocity
    else:
        new_state["theta"] = state["theta"] - eta * grad

    for name, value in new_state.items():
        if not np.all(np.isfinite(value)):
            raise NonFiniteStateError(f"{name} became non-finite at step {step}")
    return new_state
