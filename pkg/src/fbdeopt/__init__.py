"""Trajectory optimisation by forward-backward costate sweeps.

Exact gradients and Hessians of a discrete-time optimal control cost with
respect to the stacked control sequence, a regularised superlinear solver,
an augmented-Lagrangian loop for inequality constraints and a
receding-horizon driver.
"""

from .alm import AlmConfig, AlmReport, solve_constrained
from .constraints import AffineConstraint, Constraint, KeepOutZone, control_bound, control_box
from .errors import InvalidArgumentError, InvalidStateError, NumericalDivergenceError, SolverFailure
from .fbde import costate_sweep, evaluate, fd_gradient, fd_hessian, gradient, hamiltonian, hessian, hessian_row
from .model import (
    AgvModel,
    AgvParams,
    LtiModel,
    SystemModel,
    make_agv_model,
    make_lti_model,
    rollout,
    self_check_derivatives,
    total_cost,
)
from .mpc import MpcConfig, MpcRun, MpcStepError, run_mpc
from .penalty import (
    AugmentedProblem,
    PenaltyState,
    augmented_cost_derivatives,
    augmented_running_cost,
    update_multipliers,
    violation_measure,
)
from .scenario import Scenario, ScenarioError, dump_scenario, load_scenario
from .solver import SolverConfig, SolveReport, solve_msa_baseline, solve_subproblem

__version__ = "0.1.0"

__all__ = [
    "AffineConstraint",
    "AgvModel",
    "AgvParams",
    "AlmConfig",
    "AlmReport",
    "AugmentedProblem",
    "Constraint",
    "InvalidArgumentError",
    "InvalidStateError",
    "KeepOutZone",
    "LtiModel",
    "MpcConfig",
    "MpcRun",
    "MpcStepError",
    "NumericalDivergenceError",
    "PenaltyState",
    "Scenario",
    "ScenarioError",
    "SolveReport",
    "SolverConfig",
    "SolverFailure",
    "SystemModel",
    "augmented_cost_derivatives",
    "augmented_running_cost",
    "control_bound",
    "control_box",
    "costate_sweep",
    "dump_scenario",
    "evaluate",
    "fd_gradient",
    "fd_hessian",
    "gradient",
    "hamiltonian",
    "hessian",
    "hessian_row",
    "load_scenario",
    "make_agv_model",
    "make_lti_model",
    "rollout",
    "run_mpc",
    "self_check_derivatives",
    "solve_constrained",
    "solve_msa_baseline",
    "solve_subproblem",
    "total_cost",
    "update_multipliers",
    "violation_measure",
]
