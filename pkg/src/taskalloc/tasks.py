"""Go-to-point tasks, their barrier functions and the single-task controller."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class GammaKind(str, enum.Enum):
    LINEAR = "linear"
    CUBIC = "cubic"


@dataclass(frozen=True)
class GammaSpec:
    """Odd extended class-K function ``gain * h`` or ``gain * h**3``."""

    kind: GammaKind = GammaKind.LINEAR
    gain: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", GammaKind(self.kind))
        if not self.gain > 0:
            raise ValueError("gamma gain must be positive")


@dataclass(frozen=True)
class TaskSpec:
    """Drive to ``target``. Cost is the squared distance to it."""

    target: tuple[float, ...]
    label: str = ""
    kind: str = "goto"

    def __post_init__(self) -> None:
        if self.kind != "goto":
            raise ValueError(f"unsupported task kind {self.kind!r}")
        object.__setattr__(self, "target", tuple(float(v) for v in self.target))

    @property
    def dim(self) -> int:
        return len(self.target)


class BarrierEval(NamedTuple):
    h: float
    grad_h: np.ndarray


def _offset(task: TaskSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (task.dim,):
        raise ValueError(f"position has shape {x.shape}, task target has dimension {task.dim}")
    return x - np.asarray(task.target)


def eval_cost(task: TaskSpec, x) -> float:
    e = _offset(task, x)
    return float(e @ e)


def eval_cost_grad(task: TaskSpec, x) -> np.ndarray:
    return 2.0 * _offset(task, x)


def eval_barrier(task: TaskSpec, x) -> BarrierEval:
    """h = -J and its gradient."""
    e = _offset(task, x)
    return BarrierEval(-float(e @ e), -2.0 * e)


def gamma_eval(g: GammaSpec, h: float) -> float:
    if g.kind is GammaKind.LINEAR:
        return g.gain * h
    return g.gain * h**3


def single_task_controller(x, task: TaskSpec, g: GammaSpec) -> tuple[np.ndarray, float]:
    """Minimizer of ||u||^2 + delta^2 s.t. grad_h . u >= -gamma(h) - delta.

    The feasible set is a halfspace in (u, delta), so the answer is the
    projection of the origin onto it.
    """
    h, a = eval_barrier(task, x)
    b = -gamma_eval(g, h)
    if b <= 0.0:
        return np.zeros_like(a), 0.0
    # a == 0 falls out of the same formula as (0, b).
    scale = b / (float(a @ a) + 1.0)
    return scale * a, scale
