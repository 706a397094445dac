"""End-to-end acceptance criteria, one test per criterion.

Each test is tagged with ``criterion(number, title)``; the conftest prints a
PASS/FAIL line per criterion after the run. Tolerances are the stated ones.
"""

import time

import numpy as np
import pytest

from oracles import brute_force_qp, random_qp, random_scenario, random_snapshot
from taskalloc import cli
from taskalloc.allocation import (
    AllocParams,
    GlobalSpec,
    Specialization,
    build_relaxed_qp,
    evaluate_assignment,
    miqp_oracle,
    solve_relaxed,
)
from taskalloc.qp import QpProblem, QpStatus, kkt_residuals, solve_qp
from taskalloc.scenario import (
    coincident_scenario,
    example2_scenario,
    example3_scenario,
    serialize_scenario,
    single_task_scenario,
)
from taskalloc.sim import check_proposition1, metrics, run_simulation
from taskalloc.tasks import GammaKind, GammaSpec, TaskSpec, eval_barrier, gamma_eval, single_task_controller

criterion = pytest.mark.criterion


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def report(failures, **measured):
    line = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in measured.items())
    print(line)
    assert not failures, "; ".join(failures) + f" ({line})"


@criterion(1, "single robot drives to its prioritized target")
def test_criterion_01_prioritized_target():
    s = example2_scenario()
    log, wall = timed(run_simulation, s)
    final = log.steps[-1].x[0]
    dist = [float(np.linalg.norm(final - np.asarray(t.target))) for t in s.tasks]
    J3 = [r.J[0, 2] for r in log.steps]
    drop = 1.0 - J3[-1] / J3[0]
    failures = []
    if not (dist[2] < dist[0] and dist[2] < dist[1]):
        failures.append(f"final distances {dist} do not favour target 3")
    if drop < 0.80:
        failures.append(f"J3 fell by only {drop:.1%}")
    if wall >= 5.0:
        failures.append(f"runtime {wall:.2f} s")
    report(failures, d1=dist[0], d2=dist[1], d3=dist[2], J3_drop=drop, wall_s=wall)


@criterion(2, "specialized team: robot 1 keeps its task, robot 3 barely moves")
def test_criterion_02_specialized_team():
    log, wall = timed(run_simulation, example3_scenario())
    m = metrics(log)
    alpha11_min = float(m.alpha_min[0, 0])
    delta11_max = float(m.delta_max[0, 0])
    lengths = m.path_lengths
    ratio = float(lengths[2] / min(lengths[0], lengths[1]))
    failures = []
    if alpha11_min < 0.99:
        failures.append(f"min alpha_11 = {alpha11_min:.6g} < 0.99")
    if delta11_max > 1e-6:
        failures.append(f"max delta_11 = {delta11_max:.6g} > 1e-6")
    if ratio > 0.2:
        failures.append(f"robot 3 path ratio {ratio:.4g} > 0.2")
    if wall >= 10.0:
        failures.append(f"runtime {wall:.2f} s")
    report(
        failures, alpha11_min=alpha11_min, delta11_max=delta11_max,
        path1=float(lengths[0]), path2=float(lengths[1]), path3=float(lengths[2]), ratio=ratio, wall_s=wall,
    )


@criterion(3, "every robot always has a non-increasing task cost")
def test_criterion_03_some_task_executed():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    violations, worst = 0, -np.inf
    for _ in range(100):
        log = run_simulation(random_scenario(rng))
        violations += len([v for v in check_proposition1(log, 1e-6) if v.clause == "a"])
        worst = max(worst, max(float(r.Jdot.min(axis=1).max()) for r in log.steps))
    wall = time.perf_counter() - t0
    failures = []
    if violations:
        failures.append(f"{violations} violations")
    if wall >= 120.0:
        failures.append(f"runtime {wall:.1f} s")
    report(failures, violations=violations, worst_min_Jdot=worst, wall_s=wall)


@criterion(4, "robots sitting on every target receive zero input")
def test_criterion_04_zero_input_at_targets():
    log = run_simulation(coincident_scenario())
    peak = max(float(np.linalg.norm(r.u, axis=1).max()) for r in log.steps)
    report([] if peak <= 1e-8 else [f"max |u| = {peak:.3g}"], max_u=peak)


@criterion(5, "relaxed QP lower-bounds the mixed-integer optimum")
def test_criterion_05_relaxation_bound():
    rng = np.random.default_rng(1)
    worst_gap, worst_binary, n_binary = np.inf, 0.0, 0
    failures = []
    for k in range(50):
        args = random_snapshot(rng)
        relaxed = solve_relaxed(*args)
        oracle = miqp_oracle(*args)
        gap = oracle.objective - relaxed.objective
        worst_gap = min(worst_gap, gap)
        if gap < -1e-8:
            failures.append(f"snapshot {k}: relaxed exceeds oracle by {-gap:.3g}")
        nearest = relaxed.alpha.argmax(axis=1)
        binary = np.zeros_like(relaxed.alpha)
        binary[np.arange(len(nearest)), nearest] = 1.0
        if np.max(np.abs(relaxed.alpha - binary)) <= 1e-6:
            n_binary += 1
            fixed = evaluate_assignment(*args, tuple(int(m) for m in nearest))
            diff = abs(fixed.objective - relaxed.objective)
            worst_binary = max(worst_binary, diff)
            if diff > 1e-6:
                failures.append(f"snapshot {k}: binary relaxed objective off by {diff:.3g}")
    report(failures, min_gap=worst_gap, binary_cases=n_binary, worst_binary_diff=worst_binary)


@criterion(6, "QP solver matches active-set enumeration")
def test_criterion_06_qp_oracle():
    rng = np.random.default_rng(0)
    worst_obj, worst_res = 0.0, 0.0
    failures = []
    for k in range(200):
        p = random_qp(rng)
        sol = solve_qp(p)
        _, f = brute_force_qp(p)
        err = abs(sol.objective - f)
        worst_obj = max(worst_obj, err)
        if sol.status is not QpStatus.OPTIMAL:
            failures.append(f"problem {k}: {sol.status.value}")
            continue
        res = max(kkt_residuals(p, sol))
        worst_res = max(worst_res, res)
        if err > 1e-6:
            failures.append(f"problem {k}: objective off by {err:.3g}")
        if res > 1e-8:
            failures.append(f"problem {k}: residual {res:.3g}")
    report(failures, worst_objective_error=worst_obj, worst_residual=worst_res)


@criterion(7, "single-task closed form agrees with the general solver")
def test_criterion_07_single_task_cross_check():
    rng = np.random.default_rng(7)
    worst_qp, worst_alloc = 0.0, 0.0
    for _ in range(100):
        task = TaskSpec(tuple(rng.uniform(-3, 3, size=2)))
        x = rng.uniform(-3, 3, size=2)
        g = GammaSpec(GammaKind(rng.choice(["linear", "cubic"])), float(rng.uniform(0.1, 3.0)))
        u, delta = single_task_controller(x, task, g)
        closed = np.append(u, delta)
        h, a = eval_barrier(task, x)
        p = QpProblem(2 * np.eye(3), np.zeros(3), G=np.append(-a, -1.0)[None, :], h=[gamma_eval(g, h)])
        worst_qp = max(worst_qp, float(np.max(np.abs(solve_qp(p).z - closed))))
        # The allocation QP also caps delta at delta_max, which the closed form
        # does not; a linear gamma keeps delta < gain / 4, well inside the cap.
        g_lin = GammaSpec(GammaKind.LINEAR, g.gain)
        u, delta = single_task_controller(x, task, g_lin)
        dec = solve_relaxed(
            x[None, :], [task], [Specialization((1.0,))], GlobalSpec((1.0,)),
            AllocParams(C=float(rng.uniform(1, 1000)), eps_reg=0.0), g_lin,
        )
        worst_alloc = max(worst_alloc, float(np.max(np.abs(np.append(dec.u[0], dec.delta[0, 0]) - np.append(u, delta)))))
    failures = []
    if worst_qp > 1e-8:
        failures.append(f"solve_qp differs by {worst_qp:.3g}")
    if worst_alloc > 1e-8:
        failures.append(f"allocation QP differs by {worst_alloc:.3g}")
    report(failures, worst_qp_diff=worst_qp, worst_alloc_diff=worst_alloc)


@criterion(8, "single-task cost decreases monotonically to near zero")
def test_criterion_08_single_task_convergence():
    log = run_simulation(single_task_scenario())
    J = np.array([r.J[0, 0] for r in log.steps])
    max_increase = float(np.max(np.diff(J)))
    final = float(J[-1])
    failures = []
    if max_increase > 1e-9:
        failures.append(f"J increased by {max_increase:.3g} in one step")
    if final >= 1e-3:
        failures.append(f"J(10 s) = {final:.4g} >= 1e-3")
    report(failures, J0=float(J[0]), J_final=final, max_step_increase=max_increase)


@criterion(9, "problem size grows as N M^2")
def test_criterion_09_size_audit():
    failures = []
    sizes = {}
    for N, M in [(1, 1), (3, 3), (4, 3)]:
        d = 2
        x = np.zeros((N, d))
        tasks = [TaskSpec((float(m), 1.0)) for m in range(M)]
        specs = [Specialization((1.0,) * M)] * N
        p, lay = build_relaxed_qp(x, tasks, specs, GlobalSpec((1.0 / M,) * M), AllocParams(), GammaSpec())
        n_vars, n_rows = p.n, p.G.shape[0]
        sizes[f"N{N}M{M}"] = f"{n_vars}x{n_rows}"
        if n_vars != N * (d + 2 * M):
            failures.append(f"(N={N}, M={M}): {n_vars} variables")
        if n_rows != N * M + N * M * (M - 1):
            failures.append(f"(N={N}, M={M}): {n_rows} inequality rows")
    report(failures, **sizes)


@criterion(10, "repeated runs write byte-identical trajectories")
def test_criterion_10_determinism(tmp_path):
    path = tmp_path / "team.yaml"
    path.write_text(serialize_scenario(example3_scenario()), encoding="utf-8")
    outputs = []
    for name in ("a", "b"):
        code = cli.main(["run", str(path), "--out", str(tmp_path / name)])
        assert code == cli.EXIT_OK
        outputs.append((tmp_path / name / "trajectory.csv").read_bytes())
    same = outputs[0] == outputs[1]
    report([] if same else ["trajectories differ"], bytes=len(outputs[0]), identical=same)
