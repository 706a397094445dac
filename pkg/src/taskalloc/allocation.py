"""Heterogeneous task allocation as a relaxed QP, plus an exact enumeration oracle.

Decision variables are stacked per robot as ``[u_i (d), delta_i (M), alpha_i (M)]``.
The relaxed problem minimizes

    C ||pi* - pi_h(alpha)||^2 + sum_i ||u_i||^2 + delta_i' S_i delta_i
        + eps (||delta_i||^2 + ||alpha_i||^2)

subject to, for each robot i and tasks m != n,

    -grad h_im . u_i - delta_im <= gamma(h_im)                     (barrier)
    kappa delta_im - delta_in + kappa dmax alpha_im <= kappa dmax   (priority)
    sum_m alpha_im = 1
    0 <= delta_im <= dmax,  0 <= alpha_im <= 1

Inequality rows are emitted in exactly that order: all barrier rows
(robot-major, then task), then all priority rows (robot, m, n).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qp import QpProblem, QpSettings, QpSolution, QpStatus, solve_qp
from .tasks import GammaSpec, TaskSpec, eval_barrier, gamma_eval

DEFAULT_ENUMERATION_CAP = 4096
# Relative objective difference below which two assignments count as tied.
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Specialization:
    entries: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(float(v) for v in self.entries))
        if any(not v >= 0 for v in self.entries):
            raise ValueError("specialization entries must be non-negative")

    @classmethod
    def identity(cls, m: int) -> "Specialization":
        return cls((1.0,) * m)


@dataclass(frozen=True)
class GlobalSpec:
    pi_star: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "pi_star", tuple(float(v) for v in self.pi_star))
        if any(not 0.0 <= v <= 1.0 for v in self.pi_star):
            raise ValueError("pi_star components must lie in [0, 1]")


@dataclass(frozen=True)
class AllocParams:
    C: float = 100.0
    kappa: float = 10.0
    delta_max: float = 50.0
    eps_reg: float = 1e-6

    def __post_init__(self) -> None:
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.kappa > 1:
            raise ValueError("kappa must exceed 1")
        if not self.delta_max > 0:
            raise ValueError("delta_max must be positive")
        if not self.eps_reg >= 0:
            raise ValueError("eps_reg must be non-negative")


@dataclass(frozen=True)
class VariableLayout:
    d: int
    M: int
    N: int

    @property
    def block(self) -> int:
        return self.d + 2 * self.M

    @property
    def n(self) -> int:
        return self.N * self.block

    def u(self, i: int) -> slice:
        o = i * self.block
        return slice(o, o + self.d)

    def delta(self, i: int) -> slice:
        o = i * self.block + self.d
        return slice(o, o + self.M)

    def alpha(self, i: int) -> slice:
        o = i * self.block + self.d + self.M
        return slice(o, o + self.M)

    def alpha_indices(self) -> np.ndarray:
        return np.concatenate([np.arange(self.n)[self.alpha(i)] for i in range(self.N)])

    @property
    def n_barrier_rows(self) -> int:
        return self.N * self.M

    @property
    def n_priority_rows(self) -> int:
        return self.N * self.M * (self.M - 1)


@dataclass
class AllocationDecision:
    u: np.ndarray
    delta: np.ndarray
    alpha: np.ndarray
    pi_h: np.ndarray
    objective: float
    iterations: int = 0
    solution: QpSolution | None = field(default=None, repr=False)


class AllocationError(RuntimeError):
    """Solver did not return an optimal point. ``solution`` holds the best iterate."""

    def __init__(self, message: str, solution: QpSolution | None = None, assignment=None):
        super().__init__(message)
        self.solution = solution
        self.assignment = assignment


def projector(s: Specialization) -> np.ndarray:
    """Diagonal of S S^+ for diagonal S: exactly 1 where s > 0, else 0."""
    return (np.asarray(s.entries, dtype=float) > 0).astype(float)


def pi_homogeneous(alpha) -> np.ndarray:
    return np.asarray(alpha, dtype=float).mean(axis=0)


def pi_hetero(alpha, projectors) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return (np.asarray(projectors, dtype=float) * alpha).sum(axis=0) / alpha.shape[0]


def capability_set(projectors) -> tuple[frozenset[int], bool]:
    """Executable task indices (0-based) and whether [P_1 ... P_N] has full column rank."""
    proj = np.asarray(projectors, dtype=float)
    if proj.size == 0:
        m = proj.shape[1] if proj.ndim == 2 else 0
        return frozenset(), m == 0
    executable = frozenset(int(m) for m in np.flatnonzero(proj.max(axis=0) > 0.5))
    return executable, len(executable) == proj.shape[1]


def _check_inputs(x, tasks, specs, spec) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    N, d = x.shape
    M = len(tasks)
    if M < 1 or N < 1:
        raise ValueError("need at least one robot and one task")
    if len(specs) != N:
        raise ValueError(f"{len(specs)} specializations for {N} robots")
    if any(len(s.entries) != M for s in specs):
        raise ValueError("specialization length must equal the task count")
    if len(spec.pi_star) != M:
        raise ValueError("pi_star length must equal the task count")
    if any(t.dim != d for t in tasks):
        raise ValueError("task target dimension does not match robot positions")
    return x


def _barrier_terms(x: np.ndarray, tasks: Sequence[TaskSpec], g: GammaSpec):
    """grad_h[i, m] (d-vectors) and gamma(h)[i, m]."""
    N, d = x.shape
    grads = np.empty((N, len(tasks), d))
    gam = np.empty((N, len(tasks)))
    for i in range(N):
        for m, t in enumerate(tasks):
            h, a = eval_barrier(t, x[i])
            grads[i, m] = a
            gam[i, m] = gamma_eval(g, h)
    return grads, gam


def build_relaxed_qp(
    x,
    tasks: Sequence[TaskSpec],
    specs: Sequence[Specialization],
    spec: GlobalSpec,
    params: AllocParams,
    g: GammaSpec,
) -> tuple[QpProblem, VariableLayout]:
    x = _check_inputs(x, tasks, specs, spec)
    N, d = x.shape
    M = len(tasks)
    lay = VariableLayout(d, M, N)
    n = lay.n
    C, kappa, dmax, eps = params.C, params.kappa, params.delta_max, params.eps_reg
    pi_star = np.asarray(spec.pi_star)

    P = np.zeros((n, n))
    q = np.zeros(n)
    for i, s in enumerate(specs):
        P[lay.u(i), lay.u(i)] = 2.0 * np.eye(d)
        P[lay.delta(i), lay.delta(i)] = 2.0 * np.diag(np.asarray(s.entries) + eps)
        P[lay.alpha(i), lay.alpha(i)] = 2.0 * eps * np.eye(M)

    # pi_h(alpha) = B alpha, expanded into the quadratic form.
    a_idx = lay.alpha_indices()
    B = np.hstack([np.diag(projector(s)) for s in specs]) / N
    P[np.ix_(a_idx, a_idx)] += 2.0 * C * B.T @ B
    q[a_idx] = -2.0 * C * B.T @ pi_star
    c0 = C * float(pi_star @ pi_star)

    grads, gam = _barrier_terms(x, tasks, g)
    G = np.zeros((lay.n_barrier_rows + lay.n_priority_rows, n))
    h = np.zeros(G.shape[0])
    r = 0
    for i in range(N):
        du = lay.u(i).start
        dd = lay.delta(i).start
        for m in range(M):
            G[r, du:du + d] = -grads[i, m]
            G[r, dd + m] = -1.0
            h[r] = gam[i, m]
            r += 1
    for i in range(N):
        dd = lay.delta(i).start
        da = lay.alpha(i).start
        for m in range(M):
            for k in range(M):
                if k == m:
                    continue
                G[r, dd + m] = kappa
                G[r, dd + k] = -1.0
                G[r, da + m] = kappa * dmax
                h[r] = kappa * dmax
                r += 1

    A = np.zeros((N, n))
    for i in range(N):
        A[i, lay.alpha(i)] = 1.0
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    for i in range(N):
        lower[lay.delta(i)] = 0.0
        upper[lay.delta(i)] = dmax
        lower[lay.alpha(i)] = 0.0
        upper[lay.alpha(i)] = 1.0
    return QpProblem(P, q, G, h, A, np.ones(N), lower, upper, c0), lay


def _decision(z: np.ndarray, lay: VariableLayout, specs, objective, sol) -> AllocationDecision:
    u = np.array([z[lay.u(i)] for i in range(lay.N)])
    delta = np.array([z[lay.delta(i)] for i in range(lay.N)])
    alpha = np.array([z[lay.alpha(i)] for i in range(lay.N)])
    proj = np.array([projector(s) for s in specs])
    return AllocationDecision(u, delta, alpha, pi_hetero(alpha, proj), objective, sol.iterations, sol)


def solve_relaxed(
    x,
    tasks: Sequence[TaskSpec],
    specs: Sequence[Specialization],
    spec: GlobalSpec,
    params: AllocParams,
    g: GammaSpec,
    qp_settings: QpSettings | None = None,
) -> AllocationDecision:
    """Solve the relaxed allocation QP at positions ``x`` (N x d)."""
    prob, lay = build_relaxed_qp(x, tasks, specs, spec, params, g)
    sol = solve_qp(prob, qp_settings)
    if sol.status is not QpStatus.OPTIMAL:
        raise AllocationError(f"relaxed allocation QP returned {sol.status.value}", sol)
    return _decision(sol.z, lay, specs, sol.objective, sol)


def _robot_inner_qp(x_i, grads_i, gam_i, s: Specialization, m_star: int, params: AllocParams) -> QpProblem:
    """QP in (u_i, delta_i) with alpha_i = e_{m_star}; no constant terms."""
    M, d = grads_i.shape
    n = d + M
    kappa, dmax, eps = params.kappa, params.delta_max, params.eps_reg
    P = np.zeros((n, n))
    P[:d, :d] = 2.0 * np.eye(d)
    P[d:, d:] = 2.0 * np.diag(np.asarray(s.entries) + eps)
    rows, rhs = [], []
    for m in range(M):
        row = np.zeros(n)
        row[:d] = -grads_i[m]
        row[d + m] = -1.0
        rows.append(row)
        rhs.append(gam_i[m])
    for m in range(M):
        slack = kappa * dmax * (1.0 - (1.0 if m == m_star else 0.0))
        for k in range(M):
            if k == m:
                continue
            row = np.zeros(n)
            row[d + m] = kappa
            row[d + k] = -1.0
            rows.append(row)
            rhs.append(slack)
    lower = np.concatenate([np.full(d, -np.inf), np.zeros(M)])
    upper = np.concatenate([np.full(d, np.inf), np.full(M, dmax)])
    return QpProblem(P, np.zeros(n), np.array(rows), np.array(rhs), lower=lower, upper=upper)


@dataclass
class OracleResult:
    assignment: tuple[int, ...]
    decision: AllocationDecision
    objective: float
    n_evaluated: int


def _inner_solutions(x, tasks, specs, params, g, settings, pairs=None):
    """Per-robot inner optimum for each (robot, prioritized task) pair.

    Given binary alpha the inner problem separates across robots, so the cost
    of any assignment is a sum of these per-(robot, task) values plus the
    alpha-only terms.
    """
    grads, gam = _barrier_terms(x, tasks, g)
    N, M = gam.shape
    if pairs is None:
        pairs = [(i, m) for i in range(N) for m in range(M)]
    table = {}
    for i, m in pairs:
        sol = solve_qp(_robot_inner_qp(x[i], grads[i], gam[i], specs[i], m, params), settings)
        if sol.status is not QpStatus.OPTIMAL:
            raise AllocationError(
                f"inner QP failed for robot {i} prioritizing task {m}: {sol.status.value}",
                sol, assignment=(i, m),
            )
        table[i, m] = sol
    return table


def _assignment_decision(x, assignment, table, specs, spec, params) -> AllocationDecision:
    N, d = x.shape
    M = len(spec.pi_star)
    alpha = np.zeros((N, M))
    alpha[np.arange(N), list(assignment)] = 1.0
    proj = np.array([projector(s) for s in specs])
    pi_h = pi_hetero(alpha, proj)
    gap = np.asarray(spec.pi_star) - pi_h
    obj = params.C * float(gap @ gap) + params.eps_reg * N
    u = np.empty((N, d))
    delta = np.empty((N, M))
    iters = 0
    for i, m in enumerate(assignment):
        sol = table[i, m]
        obj += sol.objective
        u[i] = sol.z[:d]
        delta[i] = sol.z[d:]
        iters += sol.iterations
    return AllocationDecision(u, delta, alpha, pi_h, obj, iters)


def evaluate_assignment(x, tasks, specs, spec, params, g, assignment, qp_settings=None) -> AllocationDecision:
    """Exact optimum of the mixed-integer problem with alpha fixed to ``assignment``."""
    x = _check_inputs(x, tasks, specs, spec)
    assignment = tuple(int(m) for m in assignment)
    if len(assignment) != x.shape[0] or any(not 0 <= m < len(tasks) for m in assignment):
        raise ValueError(f"assignment {assignment} does not match {x.shape[0]} robots / {len(tasks)} tasks")
    table = _inner_solutions(x, tasks, specs, params, g, qp_settings, pairs=list(enumerate(assignment)))
    return _assignment_decision(x, assignment, table, specs, spec, params)


def miqp_oracle(
    x,
    tasks: Sequence[TaskSpec],
    specs: Sequence[Specialization],
    spec: GlobalSpec,
    params: AllocParams,
    g: GammaSpec,
    qp_settings: QpSettings | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> OracleResult:
    """Globally optimal binary allocation by enumerating all M**N assignments.

    Ties go to the lexicographically smallest assignment.
    """
    x = _check_inputs(x, tasks, specs, spec)
    N = x.shape[0]
    M = len(tasks)
    if M**N > cap:
        raise ValueError(f"{M}**{N} = {M**N} assignments exceeds enumeration cap {cap}")
    table = _inner_solutions(x, tasks, specs, params, g, qp_settings)
    best: AllocationDecision | None = None
    best_assignment: tuple[int, ...] = ()
    count = 0
    # product() yields lexicographic order; an assignment must beat the incumbent
    # by more than rounding noise, so ties keep the lexicographically smallest.
    for assignment in itertools.product(range(M), repeat=N):
        dec = _assignment_decision(x, assignment, table, specs, spec, params)
        count += 1
        if best is None or dec.objective < best.objective - TIE_TOL * (1.0 + abs(best.objective)):
            best, best_assignment = dec, assignment
    return OracleResult(best_assignment, best, best.objective, count)
