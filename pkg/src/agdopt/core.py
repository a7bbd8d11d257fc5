"""Shared optimizer plumbing: hyperparameters, schedules, step diagnostics,
and the uniform stepping contract.

Every optimizer works on flat float64 vectors and exposes a step of the shape

    (state, w, g, t, hp) -> (state', w', StepDiagnostics)

with t starting at 1. Steps are pure: inputs are never mutated, fresh state
comes back. `optimizer_step` is the validated front door; it applies decoupled
weight decay (when enabled) and dispatches on the state type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConfigError",
    "ShapeError",
    "NumericError",
    "StepSchedule",
    "HyperParams",
    "StepDiagnostics",
    "schedule_lr",
    "schedule_beta1",
    "optimizer_step",
    "as_param_vector",
    "bhat_histogram",
    "HIST_EDGES",
    "LR_KINDS",
    "BETA1_KINDS",
]


class ConfigError(ValueError):
    """A hyperparameter or configuration value outside its documented domain."""


class ShapeError(ValueError):
    """Mismatched or non-flat array shapes fed to a step."""


class NumericError(ArithmeticError):
    """A non-finite value where a finite one is required."""


LR_KINDS = ("constant", "inverse_sqrt", "milestones")
BETA1_KINDS = ("constant", "over_sqrt_t", "over_t")


@dataclass(frozen=True)
class StepSchedule:
    """Learning-rate schedule: a base value plus a decay rule.

    kinds:
      constant      lr_t = base
      inverse_sqrt  lr_t = base / sqrt(t)
      milestones    lr_t = base * prod(factor for (step, factor) if step <= t)
    """

    base: float
    kind: str = "constant"
    milestones: tuple[tuple[int, float], ...] = ()

    def at(self, t: int) -> float:
        return schedule_lr(self, t)


def schedule_lr(sched: StepSchedule, t: int) -> float:
    if t < 1:
        raise ConfigError(f"schedule evaluated at t={t}; steps start at 1")
    if sched.base <= 0.0:
        raise ConfigError(f"schedule base must be positive, got {sched.base}")
    if sched.kind == "constant":
        return sched.base
    if sched.kind == "inverse_sqrt":
        return sched.base / math.sqrt(t)
    if sched.kind == "milestones":
        lr = sched.base
        for step, factor in sched.milestones:
            if step <= t:
                lr *= factor
        return lr
    raise ConfigError(f"unknown lr schedule kind {sched.kind!r}")


@dataclass(frozen=True)
class HyperParams:
    """Hyperparameters shared across the optimizers.

    beta1 doubles as the momentum coefficient for plain SGD. delta is the
    auto-switch threshold for the gradient-difference optimizer and the
    denominator epsilon for the Adam family. weight_decay is decoupled:
    w <- w - lr_t * weight_decay * w before the optimizer-specific update.
    """

    alpha: float
    beta1: float = 0.9
    beta2: float = 0.999
    delta: float = 1e-8
    weight_decay: float = 0.0
    lr_schedule: str = "constant"
    milestones: tuple[tuple[int, float], ...] = ()
    beta1_schedule: str = "constant"

    def validate(self) -> None:
        if not (self.alpha > 0.0 and math.isfinite(self.alpha)):
            raise ConfigError(f"alpha must be a positive finite real, got {self.alpha}")
        if not (0.0 <= self.beta1 < 1.0):
            raise ConfigError(f"beta1 must lie in [0, 1), got {self.beta1}")
        if not (0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"beta2 must lie in [0, 1), got {self.beta2}")
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise ConfigError(f"delta must be a positive finite real, got {self.delta}")
        if not (self.weight_decay >= 0.0 and math.isfinite(self.weight_decay)):
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.lr_schedule not in LR_KINDS:
            raise ConfigError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.beta1_schedule not in BETA1_KINDS:
            raise ConfigError(f"unknown beta1 schedule {self.beta1_schedule!r}")
        for entry in self.milestones:
            step, factor = entry
            if step < 1 or factor <= 0.0:
                raise ConfigError(f"bad milestone {entry!r}")

    def lr_at(self, t: int) -> float:
        # same arithmetic as schedule_lr, without building a StepSchedule
        # (this sits on the hot path of every optimizer step)
        if t < 1:
            raise ConfigError(f"schedule evaluated at t={t}; steps start at 1")
        if self.lr_schedule == "constant":
            return self.alpha
        if self.lr_schedule == "inverse_sqrt":
            return self.alpha / math.sqrt(t)
        lr = self.alpha
        for step, factor in self.milestones:
            if step <= t:
                lr *= factor
        return lr

    def beta1_at(self, t: int) -> float:
        return schedule_beta1(self, t)


def schedule_beta1(hp: HyperParams, t: int) -> float:
    """Momentum-coefficient schedule; over_sqrt_t and over_t decay the base."""
    if t < 1:
        raise ConfigError(f"schedule evaluated at t={t}; steps start at 1")
    if hp.beta1_schedule == "constant":
        return hp.beta1
    if hp.beta1_schedule == "over_sqrt_t":
        return hp.beta1 / math.sqrt(t)
    if hp.beta1_schedule == "over_t":
        return hp.beta1 / t
    raise ConfigError(f"unknown beta1 schedule {hp.beta1_schedule!r}")


# Histogram convention for the rms preconditioner estimate: 18 base-10 decade
# bins spanning [1e-16, 1e2), plus an underflow bucket (index 0, includes
# exact zeros) and an overflow bucket (index 19).
HIST_EDGES = 10.0 ** np.arange(-16, 3)
HIST_BINS = HIST_EDGES.size + 1


def bhat_histogram(values: np.ndarray) -> np.ndarray:
    """Counts per bucket; always sums to values.size."""
    idx = np.searchsorted(HIST_EDGES, values, side="right")
    return np.bincount(idx, minlength=HIST_BINS)


@dataclass
class StepDiagnostics:
    """Per-step observables.

    truncation_fraction: share of coordinates riding the switch floor
      (1.0 by convention for SGD, 0.0 for the Adam family).
    bhat_histogram: bucket counts per `bhat_histogram`, or None when the
      caller asked to skip collection or the optimizer has no second moment.
    step_norm: ||w' - w||_2.
    effective_lr_minmax: smallest and largest per-coordinate multiplier
      applied to the momentum buffer.
    """

    truncation_fraction: float
    step_norm: float
    effective_lr_minmax: tuple[float, float]
    bhat_histogram: np.ndarray | None = None


def as_param_vector(x, name: str = "vector") -> np.ndarray:
    """Coerce to a flat float64 array, rejecting non-finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} must not be empty")
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise NumericError(f"{name}[{bad}] is {arr[bad]!r}; finite values required")
    return arr


def _check_step_inputs(state, w: np.ndarray, g: np.ndarray, t: int) -> None:
    if t != state.t + 1:
        raise ConfigError(f"step counter mismatch: state at t={state.t}, got t={t}")
    if w.shape != g.shape:
        raise ShapeError(f"param shape {w.shape} != gradient shape {g.shape}")


def optimizer_step(state, w, g, t: int, hp: HyperParams, collect_histogram: bool = True):
    """Validated uniform step: decay, dispatch, output check.

    Returns (state', w', StepDiagnostics). Raises ShapeError / NumericError /
    ConfigError on malformed input; never returns non-finite parameters.
    """
    from . import optim  # deferred to avoid an import cycle

    hp.validate()
    w = as_param_vector(w, "params")
    g = as_param_vector(g, "gradient")
    _check_step_inputs(state, w, g, t)

    w_in = w
    if hp.weight_decay > 0.0:
        w = w * (1.0 - hp.lr_at(t) * hp.weight_decay)

    new_state, new_w, diag = optim.dispatch_step(
        state, w, g, t, hp, collect_histogram=collect_histogram
    )
    if not np.isfinite(new_w).all():
        bad = int(np.flatnonzero(~np.isfinite(new_w))[0])
        raise NumericError(f"step produced non-finite params[{bad}] = {new_w[bad]!r}")
    if hp.weight_decay > 0.0:
        # report the total parameter change, decay shrinkage included
        diag.step_norm = float(np.linalg.norm(new_w - w_in))
    return new_state, new_w, diag
