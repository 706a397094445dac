"""Dense convex quadratic programming.

Problems are posed as::

    minimize    1/2 z'Pz + q'z + c0
    subject to  G z <= h
                A z == b
                lower <= z <= upper

and solved with a Mehrotra predictor-corrector interior-point method followed
by an active-set polishing step that recovers the vertex-exact solution when
the active set is identifiable. Sizes of a few hundred variables are the
intended range; everything is dense numpy.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import lsq_linear

logger = logging.getLogger(__name__)

# Diagonal shift added to the reduced Newton matrix; keeps PSD P factorizable.
_NEWTON_SHIFT = 1e-10
_STEP_FRACTION = 0.99


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


@dataclass
class QpSettings:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_iter: int = 20000

    def __post_init__(self) -> None:
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class QpProblem:
    """Dense QP data. Missing blocks default to empty / unbounded."""

    P: np.ndarray
    q: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    c0: float = 0.0

    def __post_init__(self) -> None:
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        n = self.q.shape[0]
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.G = np.zeros((0, n)) if self.G is None else np.asarray(self.G, dtype=float).reshape(-1, n)
        self.h = np.zeros(0) if self.h is None else np.atleast_1d(np.asarray(self.h, dtype=float))
        self.A = np.zeros((0, n)) if self.A is None else np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.zeros(0) if self.b is None else np.atleast_1d(np.asarray(self.b, dtype=float))
        self.lower = np.full(n, -np.inf) if self.lower is None else np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.full(n, np.inf) if self.upper is None else np.atleast_1d(np.asarray(self.upper, dtype=float))
        self.c0 = float(self.c0)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.P @ z + self.q @ z + self.c0)

    def scaled(self, factor: float) -> "QpProblem":
        """Same constraints, objective multiplied by ``factor``."""
        return QpProblem(
            factor * self.P, factor * self.q, self.G, self.h, self.A, self.b,
            self.lower, self.upper, factor * self.c0,
        )


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    status: QpStatus
    dual_ineq: np.ndarray | None = None
    dual_eq: np.ndarray | None = None
    # Net bound multiplier: positive entries act on upper bounds, negative on lower.
    dual_bounds: np.ndarray | None = None
    iterations: int = 0
    residuals: tuple[float, float, float] = (np.inf, np.inf, np.inf)
    polished: bool = False

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def validate_problem(p: QpProblem) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    out: list[str] = []
    n = p.n
    if p.P.shape != (n, n):
        out.append(f"P has shape {p.P.shape}, expected ({n}, {n})")
    elif not np.allclose(p.P, p.P.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(p.P), initial=0.0)))):
        out.append("P not symmetric")
    if p.G.shape[0] != p.h.shape[0]:
        out.append(f"G has {p.G.shape[0]} rows but h has length {p.h.shape[0]}")
    if p.A.shape[0] != p.b.shape[0]:
        out.append(f"A has {p.A.shape[0]} rows but b has length {p.b.shape[0]}")
    if p.lower.shape != (n,):
        out.append(f"lower has length {p.lower.shape[0]}, expected {n}")
    if p.upper.shape != (n,):
        out.append(f"upper has length {p.upper.shape[0]}, expected {n}")
    if p.lower.shape == p.upper.shape == (n,):
        for i in np.flatnonzero(p.lower > p.upper):
            out.append(f"bounds crossed at index {i}")
    for name in ("P", "q", "G", "h", "A", "b"):
        if not np.all(np.isfinite(getattr(p, name))):
            out.append(f"{name} has non-finite entries")
    if np.any(np.isnan(p.lower)) or np.any(np.isnan(p.upper)):
        out.append("bounds contain NaN")
    return out


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v), initial=0.0))


def _bound_terms(p: QpProblem, z: np.ndarray, mu: np.ndarray):
    """Split a net bound multiplier into (upper, lower) parts and their gaps."""
    mu_up = np.maximum(mu, 0.0)
    mu_lo = np.maximum(-mu, 0.0)
    with np.errstate(invalid="ignore"):
        gap_up = np.where(np.isfinite(p.upper), z - p.upper, 0.0)
        gap_lo = np.where(np.isfinite(p.lower), p.lower - z, 0.0)
    # A multiplier on an infinite bound can never be complementary.
    comp_up = np.where(np.isfinite(p.upper), np.abs(mu_up * gap_up), mu_up)
    comp_lo = np.where(np.isfinite(p.lower), np.abs(mu_lo * gap_lo), mu_lo)
    return gap_up, gap_lo, comp_up, comp_lo


def kkt_residuals(p: QpProblem, sol: QpSolution) -> tuple[float, float, float]:
    """(primal, dual, complementarity) residuals of ``sol`` for problem ``p``.

    Missing multipliers are treated as zero.
    """
    z = np.asarray(sol.z, dtype=float)
    lam = np.zeros(p.G.shape[0]) if sol.dual_ineq is None else np.asarray(sol.dual_ineq, dtype=float)
    nu = np.zeros(p.A.shape[0]) if sol.dual_eq is None else np.asarray(sol.dual_eq, dtype=float)
    mu = np.zeros(p.n) if sol.dual_bounds is None else np.asarray(sol.dual_bounds, dtype=float)

    ineq_gap = p.G @ z - p.h
    gap_up, gap_lo, comp_up, comp_lo = _bound_terms(p, z, mu)
    primal = max(
        _inf_norm(np.maximum(ineq_gap, 0.0)),
        _inf_norm(p.A @ z - p.b),
        _inf_norm(np.maximum(gap_up, 0.0)),
        _inf_norm(np.maximum(gap_lo, 0.0)),
    )
    dual = _inf_norm(p.P @ z + p.q + p.G.T @ lam + p.A.T @ nu + mu)
    comp = max(_inf_norm(lam * ineq_gap), _inf_norm(comp_up), _inf_norm(comp_lo))
    return primal, dual, comp


def _tolerances(p: QpProblem, sol: QpSolution, s: QpSettings) -> tuple[float, float, float]:
    z = sol.z
    lam = np.zeros(p.G.shape[0]) if sol.dual_ineq is None else sol.dual_ineq
    nu = np.zeros(p.A.shape[0]) if sol.dual_eq is None else sol.dual_eq
    finite = lambda v: v[np.isfinite(v)]  # noqa: E731
    primal_scale = max(
        _inf_norm(p.G @ z), _inf_norm(p.h), _inf_norm(p.A @ z), _inf_norm(p.b),
        _inf_norm(finite(p.lower)), _inf_norm(finite(p.upper)),
    )
    dual_scale = max(_inf_norm(p.P @ z), _inf_norm(p.q), _inf_norm(p.G.T @ lam), _inf_norm(p.A.T @ nu))
    comp_scale = max(primal_scale, 1.0) * max(_inf_norm(lam), _inf_norm(sol.dual_bounds if sol.dual_bounds is not None else np.zeros(0)), 1.0)
    return (
        s.abs_tol + s.rel_tol * primal_scale,
        s.abs_tol + s.rel_tol * dual_scale,
        s.abs_tol + s.rel_tol * comp_scale,
    )


@dataclass
class _Stacked:
    """Problem with bounds folded into inequality rows and equalities made full rank."""

    P: np.ndarray
    q: np.ndarray
    G: np.ndarray
    h: np.ndarray
    A: np.ndarray
    b: np.ndarray
    m_ineq: int
    up_idx: np.ndarray
    lo_idx: np.ndarray
    # Maps reduced equality multipliers back to the caller's rows.
    eq_map: np.ndarray | None = field(default=None)


def _stack(p: QpProblem) -> _Stacked | None:
    """Fold bounds into rows. Returns None if the equalities are inconsistent."""
    n = p.n
    up_idx = np.flatnonzero(np.isfinite(p.upper))
    lo_idx = np.flatnonzero(np.isfinite(p.lower))
    eye = np.eye(n)
    G = np.vstack([p.G, eye[up_idx], -eye[lo_idx]])
    h = np.concatenate([p.h, p.upper[up_idx], -p.lower[lo_idx]])

    A, b, eq_map = p.A, p.b, None
    if A.shape[0]:
        U, sv, Vt = np.linalg.svd(A, full_matrices=False)
        tol = max(A.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
        r = int(np.sum(sv > tol))
        coeff = U[:, :r].T @ b
        if _inf_norm(U[:, :r] @ coeff - b) > 1e-9 * (1.0 + _inf_norm(b)):
            return None
        if r < A.shape[0]:
            A = sv[:r, None] * Vt[:r]
            b = coeff
            # Multipliers y on the reduced rows correspond to U_r y on the originals.
            eq_map = U[:, :r]
    return _Stacked(p.P, p.q, G, h, A, b, p.G.shape[0], up_idx, lo_idx, eq_map)


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


@dataclass
class _Iterate:
    z: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    iterations: int
    converged: bool
    certificate: bool = False


def _ipm(st: _Stacked, max_iter: int, tol: float) -> _Iterate:
    P, q, G, h, A, b = st.P, st.q, st.G, st.h, st.A, st.b
    n, m, me = q.shape[0], G.shape[0], A.shape[0]
    shift = _NEWTON_SHIFT * np.eye(n)
    kkt = np.zeros((n + me, n + me))
    kkt[:n, n:] = A.T
    kkt[n:, :n] = A

    def factor(H):
        kkt[:n, :n] = H
        # A singular pivot only shows up as non-finite steps, which are handled below.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            return scipy.linalg.lu_factor(kkt, check_finite=False)

    def solve(lu, r1, r2):
        sol = scipy.linalg.lu_solve(lu, np.concatenate([r1, r2]), check_finite=False)
        return sol[:n], sol[n:]

    lu = factor(P + G.T @ G + shift)
    z, nu = solve(lu, -q + G.T @ h, b)
    s = np.maximum(h - G @ z, 1.0)
    lam = np.ones(m)

    scale = 1.0 + max(_inf_norm(q), _inf_norm(h), _inf_norm(b))
    best = np.inf
    stall = 0
    for k in range(max_iter):
        rd = P @ z + q + G.T @ lam + A.T @ nu
        rp = G @ z + s - h
        re = A @ z - b
        mu = float(s @ lam) / m
        # Complementarity is held to an absolute target so that rows with tiny
        # multipliers still separate cleanly into active / inactive for polishing.
        merit = max(max(_inf_norm(rd), _inf_norm(rp), _inf_norm(re)) / scale, 100.0 * float(np.max(s * lam)))
        if merit < best * 0.5:
            best, stall = merit, 0
        else:
            stall += 1
        if merit <= tol:
            return _Iterate(z, s, lam, nu, k, True)

        # Primal infeasibility certificate: y >= 0 with G'y + A'nu ~ 0 and h'y + b'nu < 0.
        ynorm = max(_inf_norm(lam), _inf_norm(nu))
        if ynorm > 1e6:
            gy = _inf_norm(G.T @ lam + A.T @ nu) / ynorm
            hy = float(h @ lam + b @ nu) / ynorm
            if hy < -1e-6 and gy <= 1e-9:
                return _Iterate(z, s, lam, nu, k, False, certificate=True)
        if stall > 40:
            break

        W = lam / s
        lu = factor(P + G.T @ (W[:, None] * G) + shift)

        def direction(rc):
            with np.errstate(all="ignore"):
                t = (lam * rp - rc) / s
                dz, dnu = solve(lu, -rd - G.T @ t, -re)
                dlam = W * (G @ dz) + t
                ds = -rp - G @ dz
            return dz, ds, dlam, dnu

        sl = np.concatenate([s, lam])
        dz, ds, dlam, dnu = direction(s * lam)
        a_aff = _max_step(sl, np.concatenate([ds, dlam]))
        mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dlam)) / m
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        res = max(_inf_norm(rd), _inf_norm(rp), _inf_norm(re)) / scale

        def take(rc):
            d = direction(rc)
            a = min(1.0, _STEP_FRACTION * _max_step(sl, np.concatenate([d[1], d[2]])))
            with np.errstate(all="ignore"):
                mu_new = float((s + a * d[1]) @ (lam + a * d[2])) / m
            return d, a, mu_new, (1.0 - a) * res + mu_new

        # The second-order correction is only as good as the affine step; when
        # it backfires (short step or growing complementarity), a plainly
        # centered step is tried as well and the better of the two kept.
        chosen = take(s * lam + ds * dlam - sigma * mu)
        if chosen[1] < 0.9 or chosen[2] > mu:
            chosen = min(chosen, take(s * lam - max(sigma, 0.1) * mu), key=lambda c: c[3])
        (dz, ds, dlam, dnu), a = chosen[0], chosen[1]
        if a < 1e-14:
            break
        # Near convergence lam/s can overflow the factorization; keep the last
        # finite iterate and let polishing finish.
        with np.errstate(all="ignore"):
            if not np.isfinite(dz.sum() + ds.sum() + dlam.sum() + dnu.sum()):
                break
        z, s, lam, nu = z + a * dz, s + a * ds, lam + a * dlam, nu + a * dnu
    return _Iterate(z, s, lam, nu, k + 1, False)


def _candidate_active_sets(it: _Iterate):
    """Guesses at the optimal active set, most likely first.

    Rows are ranked by multiplier/slack ratio. Besides the plain ratio > 1 cut,
    the weakest one or two rows are also tried as inactive, which resolves rows
    whose multiplier and slack are both near zero at the IPM stopping point.
    """
    ratio = it.lam / it.s
    order = np.argsort(-ratio, kind="stable")
    k = int(np.sum(ratio > 1.0))
    seen = set()
    for cut in (k, k - 1, k - 2, int(np.sum(ratio > 1e-3))):
        if 0 <= cut <= ratio.size and cut not in seen:
            seen.add(cut)
            yield np.sort(order[:cut])


def _polish(st: _Stacked, it: _Iterate, act: np.ndarray):
    """Solve the equality-constrained KKT system with rows ``act`` held active."""
    P, q, G, h, A, b = st.P, st.q, st.G, st.h, st.A, st.b
    n = q.shape[0]
    C = np.vstack([G[act], A])
    d = np.concatenate([h[act], b])
    k = C.shape[0]
    K = np.block([[P, C.T], [C, np.zeros((k, k))]])
    sol = np.linalg.lstsq(K, np.concatenate([-q, d]), rcond=None)[0]
    z = sol[:n]
    y_act = sol[n:n + act.size]
    nu = sol[n + act.size:]
    if act.size and np.min(y_act) < -1e-12 * (1.0 + _inf_norm(y_act)):
        # Dependent active rows split their multipliers arbitrarily; refit with y >= 0.
        grad = P @ z + q
        me = A.shape[0]
        M = np.hstack([G[act].T, A.T])
        lb = np.concatenate([np.zeros(act.size), np.full(me, -np.inf)])
        fit = lsq_linear(M, -grad, bounds=(lb, np.full(act.size + me, np.inf)), method="bvls", tol=1e-14)
        y_act, nu = fit.x[:act.size], fit.x[act.size:]
    lam = np.zeros(G.shape[0])
    lam[act] = np.maximum(y_act, 0.0)
    return z, lam, nu


def _unstack(st: _Stacked, p: QpProblem, z, lam, nu, iterations, status, polished=False) -> QpSolution:
    mu = np.zeros(p.n)
    k = st.m_ineq
    mu[st.up_idx] += lam[k:k + st.up_idx.size]
    mu[st.lo_idx] -= lam[k + st.up_idx.size:]
    nu_out = st.eq_map @ nu if st.eq_map is not None else nu
    sol = QpSolution(
        z=z, objective=p.objective(z), status=status, dual_ineq=lam[:k].copy(),
        dual_eq=nu_out, dual_bounds=mu, iterations=iterations, polished=polished,
    )
    sol.residuals = kkt_residuals(p, sol)
    return sol


def _within(p: QpProblem, sol: QpSolution, s: QpSettings) -> bool:
    return all(r <= t for r, t in zip(sol.residuals, _tolerances(p, sol, s)))


def _elastic_violation(st: _Stacked, max_iter: int) -> float:
    """Smallest achievable max constraint violation, via an always-feasible relaxation."""
    n, m = st.q.shape[0], st.G.shape[0]
    P = np.zeros((n + m, n + m))
    P[:n, :n] = 1e-10 * np.eye(n)
    P[n:, n:] = np.eye(m)
    G = np.block([[st.G, -np.eye(m)], [np.zeros((m, n)), -np.eye(m)]])
    h = np.concatenate([st.h, np.zeros(m)])
    A = np.hstack([st.A, np.zeros((st.A.shape[0], m))])
    el = _Stacked(P, np.zeros(n + m), G, h, A, st.b, 2 * m, np.zeros(0, int), np.zeros(0, int))
    it = _ipm(el, max_iter, 1e-12)
    if not it.converged:
        # Undetermined within the iteration budget; never claim infeasibility on that.
        return 0.0
    z = it.z[:n]
    return _inf_norm(np.maximum(st.G @ z - st.h, 0.0))


def solve_qp(p: QpProblem, settings: QpSettings | None = None) -> QpSolution:
    """Solve ``p``. Never raises for numerical failure; inspect ``status``."""
    s = settings or QpSettings()
    violations = validate_problem(p)
    crossed = [v for v in violations if v.startswith("bounds crossed")]
    if len(crossed) != len(violations):
        raise ValueError("invalid QP: " + "; ".join(violations))
    n = p.n
    if crossed:
        return QpSolution(z=np.zeros(n), objective=np.nan, status=QpStatus.INFEASIBLE)

    st = _stack(p)
    if st is None:
        return QpSolution(z=np.zeros(n), objective=np.nan, status=QpStatus.INFEASIBLE)

    if st.G.shape[0] == 0:
        me = st.A.shape[0]
        K = np.block([[st.P, st.A.T], [st.A, np.zeros((me, me))]])
        sol = np.linalg.lstsq(K, np.concatenate([-st.q, st.b]), rcond=None)[0]
        out = _unstack(st, p, sol[:n], np.zeros(0), sol[n:], 1, QpStatus.OPTIMAL, polished=True)
        if not _within(p, out, s):
            out.status = QpStatus.MAX_ITERATIONS
        return out

    inner_tol = min(s.abs_tol, s.rel_tol) * 1e-2
    it = _ipm(st, s.max_iter, inner_tol)
    if it.certificate:
        logger.debug("primal infeasibility certificate after %d iterations", it.iterations)
        out = _unstack(st, p, it.z, it.lam, it.nu, it.iterations, QpStatus.INFEASIBLE)
        return out

    out = _unstack(st, p, it.z, it.lam, it.nu, it.iterations, QpStatus.MAX_ITERATIONS)
    # A polished point is exact up to rounding; take the first one that is, even
    # if the IPM iterate has marginally smaller residuals.
    exact = 1e-10 * (1.0 + _inf_norm(st.h) + _inf_norm(st.q))
    fallback = out
    for act in _candidate_active_sets(it):
        z, lam, nu = _polish(st, it, act)
        z = np.clip(z, p.lower, p.upper)
        cand = _unstack(st, p, z, lam, nu, it.iterations, QpStatus.MAX_ITERATIONS, polished=True)
        if max(cand.residuals) <= exact:
            out = cand
            break
        if max(cand.residuals) < max(fallback.residuals):
            fallback = cand
    else:
        out = fallback
    if _within(p, out, s):
        out.status = QpStatus.OPTIMAL
        return out

    if _elastic_violation(st, s.max_iter) > max(s.abs_tol, 1e-7) * (1.0 + _inf_norm(st.h)):
        out.status = QpStatus.INFEASIBLE
    logger.debug("QP not solved: status=%s residuals=%s", out.status.value, out.residuals)
    return out
