"""Run recording, head-to-head races, and switch-behavior timelines.

A Problem bundles a start point with a loss/gradient callback; fresh problem
objects are cheap and deterministic, so every run rebuilds its own. The run
loop applies decoupled weight decay and dispatches steps exactly like
`core.optimizer_step` but validates once up front instead of every step,
which matters at race step counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, HyperParams, StepDiagnostics, as_param_vector
from .models import Dataset, MlpSpec, init_params, minibatch_stream, mlp_loss_grad
from .optim import dispatch_step, init_state
from .testfns import TestFunction
from .theory import RegretExperiment, project_box

__all__ = [
    "DIVERGENCE_LOSS",
    "TestFnProblem",
    "MlpProblem",
    "RegretProblem",
    "TrajectoryPoint",
    "Trajectory",
    "record_run",
    "RaceResult",
    "race",
    "switch_timeline",
]

# a loss above this (or any non-finite value) flags the run as diverged
DIVERGENCE_LOSS = 1e12


class TestFnProblem:
    """Deterministic full-gradient problem over an analytic test function."""

    def __init__(self, fn: TestFunction, start=None):
        self.fn = fn
        self.name = fn.name
        self.start = np.array(fn.default_start if start is None else start,
                              dtype=np.float64)
        self.optimum = fn.optimum

    def init_params(self) -> np.ndarray:
        return self.start.copy()

    def loss_grad(self, w):
        value, grad, _ = self.fn.fn(w)
        return value, grad


class MlpProblem:
    """Minibatch MLP training; the batch stream advances one step per call."""

    def __init__(self, spec: MlpSpec, ds: Dataset, batch_size: int, seed: int):
        spec.validate()
        self.spec = spec
        self.ds = ds
        self.batch_size = batch_size
        self.seed = seed
        self.name = f"mlp-{spec.activation}-{spec.loss}"
        self.optimum = None
        self._stream = minibatch_stream(ds, batch_size, seed)

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(self.ds.n / self.batch_size)

    def init_params(self) -> np.ndarray:
        return init_params(self.spec, self.seed)

    def loss_grad(self, w):
        inputs, targets = next(self._stream)
        return mlp_loss_grad(self.spec, w, inputs, targets)


class RegretProblem:
    """Projected online quadratics; the reported loss is instantaneous regret.

    loss_grad consumes one stream element per call (like minibatch training)
    and returns f_t(w) - f_t(w*), which can be negative at individual steps;
    the cumulative sum is the regret series. The project hook clips iterates
    back into the experiment's box after every optimizer step.
    """

    def __init__(self, exp: RegretExperiment):
        self.exp = exp
        self.name = f"regret-quadratics-{exp.dim}d"
        self.optimum = None
        self._star = 0.5 * ((exp.centers - exp.w_star) ** 2).sum(axis=1)
        self._t = 0

    def init_params(self) -> np.ndarray:
        return project_box(np.zeros(self.exp.dim), self.exp.lo, self.exp.hi)

    def loss_grad(self, w):
        if self._t >= self.exp.horizon:
            raise ConfigError(
                f"online stream exhausted after {self.exp.horizon} steps")
        c = self.exp.centers[self._t]
        star = float(self._star[self._t])
        self._t += 1
        d = w - c
        return 0.5 * float(d @ d) - star, d

    def project(self, w: np.ndarray) -> np.ndarray:
        return project_box(w, self.exp.lo, self.exp.hi)


@dataclass
class TrajectoryPoint:
    t: int
    loss: float
    params: np.ndarray | None = None
    diag: StepDiagnostics | None = None


@dataclass
class Trajectory:
    points: list[TrajectoryPoint]
    meta: dict = field(default_factory=dict)
    diverged: bool = False
    diverged_at: int | None = None
    steps_to_tol: int | None = None

    def losses(self) -> np.ndarray:
        return np.array([p.loss for p in self.points])

    def snapshots(self) -> list[np.ndarray]:
        return [p.params for p in self.points if p.params is not None]


def record_run(problem, optimizer: str, hp: HyperParams, steps: int,
               snapshot_every: int = 1, tol: float | None = None) -> Trajectory:
    """Run an optimizer, recording loss and scalar diagnostics every step; a
    parameter snapshot and denominator histogram are kept every
    snapshot_every steps (and at the final step).

    A loss above DIVERGENCE_LOSS (or non-finite) stops the run and flags it;
    divergence is a result, not an error. When the problem exposes a known
    optimum and tol is given, steps_to_tol records the first step whose
    post-step parameters are within tol of it (0 for a start already inside,
    None if never reached), with the same accounting as race(). A problem may
    define project(w); it is applied after every optimizer step, which is how
    constrained online runs stay inside their feasible box.
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if snapshot_every < 1:
        raise ConfigError(f"snapshot_every must be >= 1, got {snapshot_every}")
    if tol is not None and tol <= 0.0:
        raise ConfigError(f"tol must be positive, got {tol}")
    hp.validate()
    w = as_param_vector(problem.init_params(), "start params")
    state = init_state(optimizer, w.size)
    decay = hp.weight_decay
    project = getattr(problem, "project", None)
    optimum = getattr(problem, "optimum", None)
    track = tol is not None and optimum is not None
    points: list[TrajectoryPoint] = []
    traj = Trajectory(points=points, meta={
        "problem": problem.name,
        "optimizer": optimizer,
        "hp": hp,
        "steps": steps,
        "snapshot_every": snapshot_every,
    })
    if track:
        d0 = w - optimum
        if float(d0 @ d0) <= tol * tol:
            traj.steps_to_tol = 0
    for t in range(1, steps + 1):
        loss, g = problem.loss_grad(w)
        if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
            traj.diverged = True
            traj.diverged_at = t
            points.append(TrajectoryPoint(t=t, loss=loss, params=w.copy()))
            break
        snap = (t % snapshot_every == 0) or t == steps
        if decay > 0.0:
            w = w * (1.0 - hp.lr_at(t) * decay)
        state, w, diag = dispatch_step(state, w, g, t, hp, collect_histogram=snap)
        if project is not None:
            w = project(w)
        if track and traj.steps_to_tol is None:
            d = w - optimum
            if float(d @ d) <= tol * tol:
                traj.steps_to_tol = t
        points.append(TrajectoryPoint(
            t=t, loss=loss,
            params=w.copy() if snap else None,
            diag=diag,
        ))
    return traj


@dataclass
class RaceResult:
    """steps_to_tol per optimizer; None means the budget ran out (DNF)."""

    steps_to_tol: dict[str, int | None]
    final_distance: dict[str, float]
    tol: float
    max_steps: int

    def winner(self) -> str | None:
        finished = {k: v for k, v in self.steps_to_tol.items() if v is not None}
        if not finished:
            return None
        return min(finished, key=finished.get)


def race(problem, optimizers, hp_map, tol: float = 1e-2,
         max_steps: int = 100_000) -> RaceResult:
    """Independent runs to tolerance: first t with ||w_t - optimum||_2 <= tol.

    The problem must be deterministic (stateless loss_grad) and expose a known
    optimum; every entrant restarts from problem.init_params(). Distance is
    checked before the first step, so a start inside the ball scores 0.
    Results do not depend on the order optimizers are listed in.
    """
    if tol <= 0.0:
        raise ConfigError(f"tol must be positive, got {tol}")
    optimum = problem.optimum
    if optimum is None:
        raise ConfigError(f"problem {problem.name!r} has no known optimum to race to")
    steps_to_tol: dict[str, int | None] = {}
    final_distance: dict[str, float] = {}
    for name in optimizers:
        hp = hp_map[name]
        hp.validate()
        w = as_param_vector(problem.init_params(), "start params")
        state = init_state(name, w.size)
        decay = hp.weight_decay
        tol_sq = tol * tol
        d0 = w - optimum
        result: int | None = 0 if float(d0 @ d0) <= tol_sq else None
        if result is None:
            for t in range(1, max_steps + 1):
                _, g = problem.loss_grad(w)
                if decay > 0.0:
                    w = w * (1.0 - hp.lr_at(t) * decay)
                state, w, _ = dispatch_step(state, w, g, t, hp,
                                            collect_histogram=False)
                d = w - optimum
                if float(d @ d) <= tol_sq:
                    result = t
                    break
        steps_to_tol[name] = result
        d = w - optimum
        final_distance[name] = math.sqrt(float(d @ d))
    return RaceResult(steps_to_tol=steps_to_tol, final_distance=final_distance,
                      tol=tol, max_steps=max_steps)


def switch_timeline(traj: Trajectory):
    """(t, truncation_fraction, histogram) at every recorded diagnostic."""
    out = []
    for p in traj.points:
        if p.diag is not None:
            out.append((p.t, p.diag.truncation_fraction, p.diag.bhat_histogram))
    return out
