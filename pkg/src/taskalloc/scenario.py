"""Scenario documents (YAML) and the built-in example scenarios.

Document layout::

    dimension: 2
    robots:
      - start: [0.0, 0.0]
        specialization: [1.0, 1.0, 1.0]
    tasks:
      - {type: goto, target: [-1.0, 1.0], label: p1}
    pi_star: [0.0, 0.0, 1.0]
    params: {C: 100.0, kappa: 10.0, delta_max: 50.0, eps_reg: 1.0e-06}   # optional
    gamma: {kind: linear, gain: 1.0}                                     # optional
    dt: 0.02                                                             # optional
    duration: 10.0
    priorities: [2]     # optional: pin each robot's top-priority task (0-based)

JSON is accepted too, being a subset of YAML.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import yaml

from .allocation import AllocParams, GlobalSpec, Specialization
from .sim import RobotSpec, Scenario
from .tasks import GammaKind, GammaSpec, TaskSpec

_TOP_KEYS = {"dimension", "robots", "tasks", "pi_star", "params", "gamma", "dt", "duration", "priorities"}
_PARAM_KEYS = {"C", "kappa", "delta_max", "eps_reg"}


class ScenarioError(ValueError):
    """Parse or validation failure, located by line/column or document path."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None, column: int | None = None):
        self.path = path
        self.line = line
        self.column = column
        if line is not None:
            where = f"line {line}, column {column}: "
        elif path:
            where = f"{path}: "
        else:
            where = ""
        super().__init__(where + message)


def _num(value: Any, path: str) -> float:
    # YAML 1.1 reads "1e-6" (no dot) as a string, so accept numeric strings.
    if isinstance(value, bool):
        raise ScenarioError("expected a number, got a boolean", path)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise ScenarioError(f"expected a number, got {value!r}", path)


def _vec(value: Any, path: str, length: int | None = None) -> tuple[float, ...]:
    if not isinstance(value, (list, tuple)):
        raise ScenarioError("expected a list of numbers", path)
    out = tuple(_num(v, f"{path}[{k}]") for k, v in enumerate(value))
    if length is not None and len(out) != length:
        raise ScenarioError(f"expected {length} entries, got {len(out)}", path)
    return out


def _mapping(value: Any, path: str, allowed: set[str]) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError("expected a mapping", path)
    for key in value:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise ScenarioError("unknown key", where)
    return value


def _require(doc: dict, key: str, path: str = "") -> Any:
    if key not in doc:
        raise ScenarioError("missing required key", f"{path}.{key}" if path else key)
    return doc[key]


def scenario_from_dict(doc: Any) -> Scenario:
    doc = _mapping(doc, "", _TOP_KEYS)
    dim = _require(doc, "dimension")
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise ScenarioError("must be a positive integer", "dimension")

    raw_tasks = _require(doc, "tasks")
    if not isinstance(raw_tasks, list) or not raw_tasks:
        raise ScenarioError("expected a non-empty list", "tasks")
    tasks = []
    for m, t in enumerate(raw_tasks):
        path = f"tasks[{m}]"
        t = _mapping(t, path, {"type", "target", "label"})
        kind = t.get("type", "goto")
        if kind != "goto":
            raise ScenarioError(f"unsupported task type {kind!r}", f"{path}.type")
        label = t.get("label", "")
        tasks.append(TaskSpec(_vec(_require(t, "target", path), f"{path}.target", dim), str(label)))
    M = len(tasks)

    raw_robots = _require(doc, "robots")
    if not isinstance(raw_robots, list) or not raw_robots:
        raise ScenarioError("expected a non-empty list", "robots")
    robots = []
    for i, r in enumerate(raw_robots):
        path = f"robots[{i}]"
        r = _mapping(r, path, {"start", "specialization"})
        start = _vec(_require(r, "start", path), f"{path}.start", dim)
        entries = _vec(_require(r, "specialization", path), f"{path}.specialization")
        if len(entries) != M:
            raise ScenarioError(f"has {len(entries)} entries but there are {M} tasks", f"{path}.specialization")
        if any(v < 0 for v in entries):
            raise ScenarioError("negative entry", f"{path}.specialization")
        robots.append(RobotSpec(start, Specialization(entries)))

    pi_star = _vec(_require(doc, "pi_star"), "pi_star", M)
    for m, v in enumerate(pi_star):
        if not 0.0 <= v <= 1.0:
            raise ScenarioError("must lie in [0, 1]", f"pi_star[{m}]")

    raw_params = _mapping(doc.get("params", {}) or {}, "params", _PARAM_KEYS)
    pvals = {k: _num(v, f"params.{k}") for k, v in raw_params.items()}
    if "kappa" in pvals and not pvals["kappa"] > 1:
        raise ScenarioError("kappa must exceed 1", "params.kappa")
    if "C" in pvals and not pvals["C"] > 0:
        raise ScenarioError("C must be positive", "params.C")
    if "delta_max" in pvals and not pvals["delta_max"] > 0:
        raise ScenarioError("delta_max must be positive", "params.delta_max")
    if "eps_reg" in pvals and not pvals["eps_reg"] >= 0:
        raise ScenarioError("eps_reg must be non-negative", "params.eps_reg")
    params = AllocParams(**pvals)

    raw_gamma = _mapping(doc.get("gamma", {}) or {}, "gamma", {"kind", "gain"})
    try:
        kind = GammaKind(str(raw_gamma.get("kind", "linear")).lower())
    except ValueError:
        raise ScenarioError("must be 'linear' or 'cubic'", "gamma.kind") from None
    gain = _num(raw_gamma.get("gain", 1.0), "gamma.gain")
    if not gain > 0:
        raise ScenarioError("gain must be positive", "gamma.gain")

    dt = _num(doc.get("dt", 0.02), "dt")
    duration = _num(_require(doc, "duration"), "duration")
    if not dt > 0:
        raise ScenarioError("must be positive", "dt")
    if not dt < duration:
        raise ScenarioError("must exceed dt", "duration")

    priorities = doc.get("priorities")
    if priorities is not None:
        if not isinstance(priorities, list) or len(priorities) != len(robots):
            raise ScenarioError("expected one task index per robot", "priorities")
        for i, m in enumerate(priorities):
            if isinstance(m, bool) or not isinstance(m, int) or not 0 <= m < M:
                raise ScenarioError(f"must be a task index in [0, {M - 1}]", f"priorities[{i}]")
        priorities = tuple(priorities)

    return Scenario(
        d=dim, robots=tuple(robots), tasks=tuple(tasks), global_spec=GlobalSpec(pi_star),
        params=params, gamma=GammaSpec(kind, gain), dt=dt, duration=duration,
        fixed_priorities=priorities,
    )


def parse_scenario(text: str) -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line, col = (mark.line + 1, mark.column + 1) if mark else (None, None)
        raise ScenarioError(f"syntax error: {exc.problem or exc}", line=line, column=col) from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"syntax error: {exc}") from None
    return scenario_from_dict(doc)


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def scenario_to_dict(s: Scenario) -> dict:
    doc: dict[str, Any] = {
        "dimension": s.d,
        "robots": [
            {"start": list(r.start), "specialization": list(r.specialization.entries)} for r in s.robots
        ],
        "tasks": [{"type": "goto", "target": list(t.target), "label": t.label} for t in s.tasks],
        "pi_star": list(s.global_spec.pi_star),
        "params": {
            "C": s.params.C, "kappa": s.params.kappa,
            "delta_max": s.params.delta_max, "eps_reg": s.params.eps_reg,
        },
        "gamma": {"kind": s.gamma.kind.value, "gain": s.gamma.gain},
        "dt": s.dt,
        "duration": s.duration,
    }
    if s.fixed_priorities is not None:
        doc["priorities"] = list(s.fixed_priorities)
    return doc


def serialize_scenario(s: Scenario) -> str:
    # PyYAML writes floats with repr(), which round-trips exactly.
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=None)


# Built-in scenarios ---------------------------------------------------------

def example2_scenario(duration: float = 10.0, dt: float = 0.02) -> Scenario:
    """One robot, three go-to tasks, top priority pinned on the third."""
    ident = Specialization.identity(3)
    return Scenario(
        d=2,
        robots=(RobotSpec((0.0, 0.0), ident),),
        tasks=(TaskSpec((-1.0, 1.0), "p1"), TaskSpec((1.0, 1.0), "p2"), TaskSpec((0.0, -2.0), "p3")),
        global_spec=GlobalSpec((0.0, 0.0, 1.0)),
        dt=dt, duration=duration, fixed_priorities=(2,),
    )


def example3_scenario(duration: float = 10.0, dt: float = 0.02) -> Scenario:
    """Three robots, each specialized for exactly one of three go-to tasks.

    Robots start clustered near the origin at roughly equal distances from
    their own targets.
    """
    return Scenario(
        d=2,
        robots=(
            RobotSpec((-0.2, 0.0), Specialization((1.0, 0.0, 0.0))),
            RobotSpec((0.2, 0.0), Specialization((0.0, 1.0, 0.0))),
            RobotSpec((0.0, 0.2), Specialization((0.0, 0.0, 1.0))),
        ),
        tasks=(TaskSpec((-1.0, 1.0), "p1"), TaskSpec((1.0, 1.0), "p2"), TaskSpec((0.0, -1.0), "p3")),
        global_spec=GlobalSpec((0.5, 0.5, 0.0)),
        dt=dt, duration=duration,
    )


def coincident_scenario(duration: float = 2.0, dt: float = 0.02) -> Scenario:
    """Every robot already sits on every target."""
    p = (0.3, -0.7)
    return Scenario(
        d=2,
        robots=tuple(RobotSpec(p, Specialization.identity(2)) for _ in range(2)),
        tasks=(TaskSpec(p, "a"), TaskSpec(p, "b")),
        global_spec=GlobalSpec((0.5, 0.5)),
        dt=dt, duration=duration,
    )


def single_task_scenario(start=(1.0, 0.0), duration: float = 10.0, dt: float = 0.02, gain: float = 1.0) -> Scenario:
    return Scenario(
        d=2,
        robots=(RobotSpec(start, Specialization((1.0,))),),
        tasks=(TaskSpec((0.0, 0.0), "origin"),),
        global_spec=GlobalSpec((1.0,)),
        gamma=GammaSpec(GammaKind.LINEAR, gain),
        dt=dt, duration=duration,
    )


PRESETS = {
    "example2": example2_scenario,
    "example3": example3_scenario,
    "coincident": coincident_scenario,
    "single_task": single_task_scenario,
}
