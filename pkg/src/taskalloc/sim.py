"""Closed-loop single-integrator simulation with runtime task-execution monitors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .allocation import (
    AllocationDecision,
    AllocationError,
    AllocParams,
    GlobalSpec,
    Specialization,
    evaluate_assignment,
    solve_relaxed,
)
from .qp import QpSettings
from .tasks import GammaSpec, TaskSpec, eval_cost, eval_cost_grad

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RobotSpec:
    start: tuple[float, ...]
    specialization: Specialization

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))


@dataclass(frozen=True)
class Scenario:
    d: int
    robots: tuple[RobotSpec, ...]
    tasks: tuple[TaskSpec, ...]
    global_spec: GlobalSpec
    params: AllocParams = AllocParams()
    gamma: GammaSpec = GammaSpec()
    dt: float = 0.02
    duration: float = 10.0
    # Per-robot task index (0-based) pinned as top priority; None runs the relaxed allocation.
    fixed_priorities: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "robots", tuple(self.robots))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if self.fixed_priorities is not None:
            object.__setattr__(self, "fixed_priorities", tuple(int(m) for m in self.fixed_priorities))
        for problem in self.problems():
            raise ValueError(problem)

    def problems(self) -> list[str]:
        out = []
        if not self.robots:
            out.append("scenario needs at least one robot")
        if not self.tasks:
            out.append("scenario needs at least one task")
        if not self.dt > 0:
            out.append("dt must be positive")
        if not self.dt < self.duration:
            out.append("dt must be smaller than duration")
        M = len(self.tasks)
        for i, r in enumerate(self.robots):
            if len(r.start) != self.d:
                out.append(f"robot {i} start has dimension {len(r.start)}, expected {self.d}")
            if len(r.specialization.entries) != M:
                out.append(f"robot {i} specialization has length {len(r.specialization.entries)}, expected {M}")
        for m, t in enumerate(self.tasks):
            if t.dim != self.d:
                out.append(f"task {m} target has dimension {t.dim}, expected {self.d}")
        if len(self.global_spec.pi_star) != M:
            out.append(f"pi_star has length {len(self.global_spec.pi_star)}, expected {M}")
        if self.fixed_priorities is not None:
            if len(self.fixed_priorities) != len(self.robots):
                out.append("fixed_priorities needs one task index per robot")
            elif any(not 0 <= m < M for m in self.fixed_priorities):
                out.append(f"fixed_priorities entries must lie in [0, {M - 1}]")
        return out

    @property
    def n_steps(self) -> int:
        # Guard against 10 / 0.02 = 499.99999... style rounding.
        return int(math.floor(self.duration / self.dt + 1e-9)) + 1

    @property
    def specializations(self) -> list[Specialization]:
        return [r.specialization for r in self.robots]

    def start_positions(self) -> np.ndarray:
        return np.array([r.start for r in self.robots], dtype=float)


@dataclass
class StepRecord:
    t: float
    x: np.ndarray
    u: np.ndarray
    delta: np.ndarray
    alpha: np.ndarray
    pi_h: np.ndarray
    J: np.ndarray
    Jdot: np.ndarray
    objective: float
    iterations: int


@dataclass
class SimSummary:
    final_objective: float
    path_lengths: np.ndarray
    prop1_violations: int
    alpha_switches: np.ndarray
    iterations_min: int
    iterations_mean: float
    iterations_max: int


@dataclass
class SimLog:
    steps: list[StepRecord] = field(default_factory=list)
    summary: SimSummary | None = None


class SimulationError(RuntimeError):
    """Solver failure mid-run. ``log`` holds every step completed before it."""

    def __init__(self, message: str, log: SimLog, step: int):
        super().__init__(message)
        self.log = log
        self.step = step


def step_euler(x, u, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    return np.asarray(x, dtype=float) + dt * np.asarray(u, dtype=float)


def task_costs(x: np.ndarray, u: np.ndarray, tasks: Sequence[TaskSpec]) -> tuple[np.ndarray, np.ndarray]:
    """Per-robot, per-task costs J and their rates grad J . u."""
    N = x.shape[0]
    J = np.empty((N, len(tasks)))
    Jdot = np.empty_like(J)
    for i in range(N):
        for m, t in enumerate(tasks):
            J[i, m] = eval_cost(t, x[i])
            Jdot[i, m] = float(eval_cost_grad(t, x[i]) @ u[i])
    return J, Jdot


def _record(t: float, x: np.ndarray, dec: AllocationDecision, tasks) -> StepRecord:
    J, Jdot = task_costs(x, dec.u, tasks)
    return StepRecord(
        t=t, x=x.copy(), u=dec.u, delta=dec.delta, alpha=dec.alpha, pi_h=dec.pi_h,
        J=J, Jdot=Jdot, objective=dec.objective, iterations=dec.iterations,
    )


def run_simulation(
    s: Scenario,
    qp_settings: QpSettings | None = None,
    *,
    n_steps: int | None = None,
    prop1_tol: float = 1e-6,
) -> SimLog:
    """Solve the allocation QP at every step and integrate x' = u.

    ``n_steps`` truncates the run (used for mid-run snapshots).
    """
    log = SimLog()
    x = s.start_positions()
    specs = s.specializations
    total = s.n_steps if n_steps is None else min(n_steps, s.n_steps)
    for k in range(total):
        t = k * s.dt
        try:
            if s.fixed_priorities is None:
                dec = solve_relaxed(x, s.tasks, specs, s.global_spec, s.params, s.gamma, qp_settings)
            else:
                dec = evaluate_assignment(
                    x, s.tasks, specs, s.global_spec, s.params, s.gamma, s.fixed_priorities, qp_settings
                )
        except AllocationError as exc:
            raise SimulationError(f"allocation failed at step {k} (t={t:g}): {exc}", log, k) from exc
        log.steps.append(_record(t, x, dec, s.tasks))
        x = step_euler(x, dec.u, s.dt)
    log.summary = summarize(log, prop1_tol)
    return log


@dataclass
class Prop1Violation:
    step: int
    robot: int
    clause: str
    value: float

    def as_dict(self) -> dict:
        return {"step": self.step, "robot": self.robot, "clause": self.clause, "value": self.value}


def check_proposition1(log: SimLog, tol: float = 1e-6, tasks: Sequence[TaskSpec] | None = None) -> list[Prop1Violation]:
    """Per-robot check of the two execution guarantees.

    (a) every robot has some task whose cost is not increasing: min_m Jdot <= tol;
    (b) at steps where every cost gradient is (numerically) zero, every input is zero.

    Cost gradients are recomputed from ``tasks`` when given, otherwise from the
    logged costs (for the quadratic go-to-point cost, ||grad J|| = 2 sqrt(J)).
    """
    out: list[Prop1Violation] = []
    for k, rec in enumerate(log.steps):
        worst = rec.Jdot.min(axis=1)
        for i in np.flatnonzero(worst > tol):
            out.append(Prop1Violation(k, int(i), "a", float(worst[i])))
        if tasks is not None:
            grad_norm = max(
                float(np.linalg.norm(eval_cost_grad(t, xi))) for xi in rec.x for t in tasks
            )
        else:
            grad_norm = float(2.0 * np.sqrt(np.max(rec.J)))
        if grad_norm <= tol:
            speeds = np.linalg.norm(rec.u, axis=1)
            for i in np.flatnonzero(speeds > tol):
                out.append(Prop1Violation(k, int(i), "b", float(speeds[i])))
    return out


@dataclass
class Metrics:
    path_lengths: np.ndarray
    final_J: np.ndarray
    alpha_min: np.ndarray
    alpha_max: np.ndarray
    delta_max: np.ndarray


def metrics(log: SimLog) -> Metrics:
    xs = np.array([r.x for r in log.steps])
    alphas = np.array([r.alpha for r in log.steps])
    deltas = np.array([r.delta for r in log.steps])
    if len(xs) > 1:
        path = np.linalg.norm(np.diff(xs, axis=0), axis=2).sum(axis=0)
    else:
        path = np.zeros(xs.shape[1])
    return Metrics(path, log.steps[-1].J.copy(), alphas.min(axis=0), alphas.max(axis=0), deltas.max(axis=0))


def alpha_switches(log: SimLog, margin: float = 1e-6) -> np.ndarray:
    """Per robot, how often the top-priority task changes (a chattering diagnostic).

    A change only counts when the new top task leads the previous one by more
    than ``margin``, so numerically tied priorities do not register.
    """
    N = log.steps[0].alpha.shape[0]
    counts = np.zeros(N, dtype=int)
    top = log.steps[0].alpha.argmax(axis=1)
    for rec in log.steps[1:]:
        for i in range(N):
            cand = int(rec.alpha[i].argmax())
            if cand != top[i] and rec.alpha[i, cand] - rec.alpha[i, top[i]] > margin:
                counts[i] += 1
                top[i] = cand
    return counts


def summarize(log: SimLog, prop1_tol: float = 1e-6) -> SimSummary:
    m = metrics(log)
    iters = np.array([r.iterations for r in log.steps])
    switches = alpha_switches(log)
    return SimSummary(
        final_objective=log.steps[-1].objective,
        path_lengths=m.path_lengths,
        prop1_violations=len(check_proposition1(log, prop1_tol)),
        alpha_switches=switches,
        iterations_min=int(iters.min()),
        iterations_mean=float(iters.mean()),
        iterations_max=int(iters.max()),
    )
