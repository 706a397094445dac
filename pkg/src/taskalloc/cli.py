"""Command-line entry point.

    taskalloc run <scenario> --out <dir>
    taskalloc oracle-compare <scenario> --time <seconds>
    taskalloc validate <scenario>

Exit codes: 0 success, 1 engineering failure (I/O, parse, solver, cap), 2 the
run completed but a task-execution monitor was violated.
Log verbosity comes from the TASKALLOC_LOG_LEVEL environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .allocation import (
    AllocationError,
    capability_set,
    miqp_oracle,
    projector,
    solve_relaxed,
)
from .scenario import ScenarioError, load_scenario
from .sim import Scenario, SimLog, SimulationError, check_proposition1, metrics, run_simulation

log = logging.getLogger("taskalloc")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MONITOR = 2
RELAXATION_SLACK = 1e-8
NEAR_BINARY = 1e-6


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def trajectory_header(d: int, M: int) -> list[str]:
    return (
        ["t", "robot"]
        + [f"x{k + 1}" for k in range(d)]
        + [f"u{k + 1}" for k in range(d)]
        + [f"delta{m + 1}" for m in range(M)]
        + [f"alpha{m + 1}" for m in range(M)]
        + [f"pi_h{m + 1}" for m in range(M)]
    )


def write_trajectory(path: Path, scenario: Scenario, sim_log: SimLog) -> int:
    """One row per robot per step; the team allocation pi_h repeats on each robot's row."""
    rows = 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(scenario.d, len(scenario.tasks)))
        for rec in sim_log.steps:
            for i in range(rec.x.shape[0]):
                w.writerow(
                    [_fmt(rec.t), str(i)]
                    + [_fmt(v) for v in rec.x[i]]
                    + [_fmt(v) for v in rec.u[i]]
                    + [_fmt(v) for v in rec.delta[i]]
                    + [_fmt(v) for v in rec.alpha[i]]
                    + [_fmt(v) for v in rec.pi_h]
                )
                rows += 1
    return rows


def _load(path: str) -> Scenario | None:
    try:
        return load_scenario(path)
    except OSError as exc:
        print(f"error: cannot read scenario {path}: {exc}", file=sys.stderr)
    except ScenarioError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
    return None


def cmd_run(scenario_path: str, out_dir: str) -> int:
    scenario = _load(scenario_path)
    if scenario is None:
        return EXIT_FAILURE
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    t0 = time.perf_counter()
    try:
        sim_log = run_simulation(scenario)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.log.steps:
            write_trajectory(out / "trajectory.csv", scenario, exc.log)
        return EXIT_FAILURE
    wall = time.perf_counter() - t0

    write_trajectory(out / "trajectory.csv", scenario, sim_log)
    violations = check_proposition1(sim_log, 1e-6)
    m = metrics(sim_log)
    s = sim_log.summary
    summary = {
        "final_objective": s.final_objective,
        "prop1_violations": len(violations),
        "path_lengths": m.path_lengths.tolist(),
        "final_J": m.final_J.tolist(),
        "alpha_switches": s.alpha_switches.tolist(),
        "steps": len(sim_log.steps),
        "wall_clock_s": wall,
        "solver_iterations": {"min": s.iterations_min, "mean": s.iterations_mean, "max": s.iterations_max},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    report = {"tol": 1e-6, "violations": [v.as_dict() for v in violations]}
    (out / "prop1_report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    log.info("run finished: %d steps in %.3f s", len(sim_log.steps), wall)
    if violations:
        print(f"{len(violations)} task-execution monitor violation(s); see {out / 'prop1_report.json'}")
        return EXIT_MONITOR
    return EXIT_OK


def oracle_compare(scenario: Scenario, at_time: float) -> dict:
    k = int(round(at_time / scenario.dt))
    if k > 0:
        sim_log = run_simulation(scenario, n_steps=k + 1)
        x = sim_log.steps[-1].x
    else:
        x = scenario.start_positions()
    args = (x, scenario.tasks, scenario.specializations, scenario.global_spec, scenario.params, scenario.gamma)
    relaxed = solve_relaxed(*args)
    oracle = miqp_oracle(*args)
    nearest = np.zeros_like(relaxed.alpha)
    nearest[np.arange(len(nearest)), relaxed.alpha.argmax(axis=1)] = 1.0
    alpha_gap = float(np.max(np.abs(relaxed.alpha - nearest)))
    return {
        "time": k * scenario.dt,
        "relaxed_objective": relaxed.objective,
        "oracle_objective": oracle.objective,
        "gap": oracle.objective - relaxed.objective,
        "oracle_assignment": list(oracle.assignment),
        "relaxed_alpha": relaxed.alpha.tolist(),
        "relaxed_near_binary": alpha_gap <= NEAR_BINARY,
        "relaxed_alpha_distance_to_oracle": float(np.max(np.abs(relaxed.alpha - oracle.decision.alpha))),
        "bound_holds": relaxed.objective <= oracle.objective + RELAXATION_SLACK,
    }


def cmd_oracle_compare(scenario_path: str, at_time: float) -> int:
    scenario = _load(scenario_path)
    if scenario is None:
        return EXIT_FAILURE
    try:
        record = oracle_compare(scenario, at_time)
    except (ValueError, AllocationError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(json.dumps(record, indent=2))
    return EXIT_OK if record["bound_holds"] else EXIT_FAILURE


def validate_messages(scenario: Scenario) -> list[str]:
    proj = np.array([projector(r.specialization) for r in scenario.robots])
    M = len(scenario.tasks)
    executable, full = capability_set(proj)
    names = [f"T{m + 1}" for m in range(M)]
    lines = []
    if full:
        lines.append(f"all {M} tasks executable; full column rank")
    else:
        ok = ", ".join(names[m] for m in sorted(executable)) or "none"
        lines.append(f"executable tasks: {ok}; not full column rank")
    pi_star = scenario.global_spec.pi_star
    for m, v in enumerate(pi_star):
        if v > 0 and m not in executable:
            lines.append(f"warning: pi_star requests {names[m]} ({v:g}) but no robot can execute it")
    total = sum(pi_star)
    if abs(total - 1.0) > 1e-9:
        lines.append(f"warning: pi_star sums to {total:g}, not 1")
    return lines


def cmd_validate(scenario_path: str) -> int:
    scenario = _load(scenario_path)
    if scenario is None:
        return EXIT_FAILURE
    for line in validate_messages(scenario):
        print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taskalloc", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="simulate a scenario and write trajectory/summary files")
    p.add_argument("scenario")
    p.add_argument("--out", required=True, help="output directory")
    p = sub.add_parser("oracle-compare", help="compare relaxed QP against the exact MIQP at a snapshot")
    p.add_argument("scenario")
    p.add_argument("--time", type=float, default=0.0, help="snapshot time in seconds")
    p = sub.add_parser("validate", help="parse a scenario and report task capabilities")
    p.add_argument("scenario")
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("TASKALLOC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.scenario, args.out)
    if args.command == "oracle-compare":
        return cmd_oracle_compare(args.scenario, args.time)
    return cmd_validate(args.scenario)


if __name__ == "__main__":
    sys.exit(main())
