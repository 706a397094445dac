"""Constraint-driven multi-task execution and task allocation for heterogeneous robot teams."""

from .allocation import (
    AllocationDecision,
    AllocationError,
    AllocParams,
    GlobalSpec,
    Specialization,
    VariableLayout,
    build_relaxed_qp,
    capability_set,
    evaluate_assignment,
    miqp_oracle,
    pi_hetero,
    pi_homogeneous,
    projector,
    solve_relaxed,
)
from .qp import QpProblem, QpSettings, QpSolution, QpStatus, kkt_residuals, solve_qp, validate_problem
from .scenario import ScenarioError, load_scenario, parse_scenario, serialize_scenario
from .sim import RobotSpec, Scenario, SimLog, check_proposition1, metrics, run_simulation, step_euler
from .tasks import (
    GammaKind,
    GammaSpec,
    TaskSpec,
    eval_barrier,
    eval_cost,
    gamma_eval,
    single_task_controller,
)

__version__ = "0.1.0"
