"""Independent reference implementations and random instance generators for tests."""

from __future__ import annotations

import itertools

import numpy as np

from taskalloc.allocation import AllocParams, GlobalSpec, Specialization, capability_set, projector
from taskalloc.qp import QpProblem
from taskalloc.sim import RobotSpec, Scenario
from taskalloc.tasks import GammaSpec, TaskSpec


def brute_force_qp(p: QpProblem, feas_tol: float = 1e-9):
    """Minimum over all candidate active sets of the equality-constrained optimum.

    Every inequality row (bounds included) is tried active or inactive; each
    feasible stationary point is a valid upper bound and the true optimum is
    among them. Only sensible for strictly convex P and a handful of rows.
    Returns (z, objective) or (None, inf) if nothing feasible turns up.
    """
    n = p.n
    eye = np.eye(n)
    up = np.flatnonzero(np.isfinite(p.upper))
    lo = np.flatnonzero(np.isfinite(p.lower))
    G = np.vstack([p.G, eye[up], -eye[lo]])
    h = np.concatenate([p.h, p.upper[up], -p.lower[lo]])
    m = G.shape[0]
    best_z, best_f = None, np.inf
    max_active = n - p.A.shape[0]
    for k in range(0, min(m, max_active) + 1):
        for rows in itertools.combinations(range(m), k):
            C = np.vstack([p.A, G[list(rows)]])
            d = np.concatenate([p.b, h[list(rows)]])
            r = C.shape[0]
            K = np.block([[p.P, C.T], [C, np.zeros((r, r))]])
            if np.linalg.matrix_rank(K) < K.shape[0]:
                continue
            z = np.linalg.solve(K, np.concatenate([-p.q, d]))[:n]
            if np.any(G @ z - h > feas_tol) or np.any(np.abs(p.A @ z - p.b) > feas_tol):
                continue
            f = p.objective(z)
            if f < best_f:
                best_z, best_f = z, f
    return best_z, best_f


def random_qp(rng: np.random.Generator, n_max: int = 8, mi_max: int = 6, me_max: int = 2, bounds_max: int = 2) -> QpProblem:
    """Random strictly convex, feasible QP."""
    n = int(rng.integers(1, n_max + 1))
    L = rng.normal(size=(n, n))
    P = L @ L.T + 0.1 * np.eye(n)
    q = rng.normal(size=n) * 3
    z0 = rng.normal(size=n)
    mi = int(rng.integers(0, mi_max + 1))
    G = rng.normal(size=(mi, n))
    # Some rows tight at z0, the rest with random slack.
    h = G @ z0 + rng.uniform(0, 1, size=mi) * (rng.uniform(size=mi) < 0.7)
    me = int(rng.integers(0, min(me_max, n - 1) + 1))
    A = rng.normal(size=(me, n))
    b = A @ z0
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    for j in rng.choice(n, size=min(n, int(rng.integers(0, bounds_max + 1))), replace=False):
        if rng.uniform() < 0.5:
            lower[j] = z0[j] - rng.uniform(0, 1)
        else:
            upper[j] = z0[j] + rng.uniform(0, 1)
    return QpProblem(P, q, G, h, A, b, lower, upper, c0=float(rng.normal()))


def random_binary_specs(rng: np.random.Generator, N: int, M: int) -> list[Specialization]:
    """Binary diagonal specializations whose union covers every task."""
    while True:
        raw = rng.integers(0, 2, size=(N, M)).astype(float)
        specs = [Specialization(tuple(r)) for r in raw]
        _, full = capability_set(np.array([projector(s) for s in specs]))
        if full:
            return specs


def random_simplex(rng: np.random.Generator, M: int) -> tuple[float, ...]:
    w = rng.dirichlet(np.ones(M))
    return tuple(float(v) for v in w)


def random_snapshot(rng: np.random.Generator, N_max: int = 4, M_max: int = 3, binary: bool = True):
    N = int(rng.integers(1, N_max + 1))
    M = int(rng.integers(1, M_max + 1))
    x = rng.uniform(-2, 2, size=(N, 2))
    tasks = [TaskSpec(tuple(rng.uniform(-2, 2, size=2))) for _ in range(M)]
    if binary:
        specs = random_binary_specs(rng, N, M)
    else:
        specs = [Specialization(tuple(rng.uniform(0, 2, size=M) * (rng.uniform(size=M) < 0.7))) for _ in range(N)]
    return x, tasks, specs, GlobalSpec(random_simplex(rng, M)), AllocParams(), GammaSpec()


def random_scenario(rng: np.random.Generator, duration: float = 2.0, dt: float = 0.02) -> Scenario:
    x, tasks, specs, spec, params, g = random_snapshot(rng)
    robots = tuple(RobotSpec(tuple(xi), s) for xi, s in zip(x, specs))
    return Scenario(2, robots, tuple(tasks), spec, params, g, dt=dt, duration=duration)
