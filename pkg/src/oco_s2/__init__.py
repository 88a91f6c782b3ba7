"""Online convex optimization with stateful costs and sparse block communication."""

__version__ = "0.1.0"

from .comparator import (
    ComparatorProblem,
    SolverOptions,
    aggregate_diagnostics,
    default_budget,
    path_length,
    solve_comparator,
)
from .costs import AssumptionConstants, CostConfig, Surrogate, estimate_constants
from .learner import (
    LearnerConfig,
    PredictionSequence,
    block_gradient,
    project_box,
    run_ogd,
    run_ogd_p,
    sample_participants,
    tuned_params,
)
from .lti import (
    ConfigurationError,
    DisturbanceParams,
    SystemModel,
    default_model,
    diagonal_surrogate_state,
    finite_window_state,
    generate_disturbances,
    simulate,
    step,
)
from .metrics import (
    comm_blk,
    regret_bound_rhs,
    regret_bound_tuned,
    regret_report,
    theory_constants,
)

__all__ = [
    "AssumptionConstants",
    "ComparatorProblem",
    "ConfigurationError",
    "CostConfig",
    "DisturbanceParams",
    "LearnerConfig",
    "PredictionSequence",
    "SolverOptions",
    "Surrogate",
    "SystemModel",
    "aggregate_diagnostics",
    "block_gradient",
    "comm_blk",
    "default_budget",
    "default_model",
    "diagonal_surrogate_state",
    "estimate_constants",
    "finite_window_state",
    "generate_disturbances",
    "path_length",
    "project_box",
    "regret_bound_rhs",
    "regret_bound_tuned",
    "regret_report",
    "run_ogd",
    "run_ogd_p",
    "sample_participants",
    "simulate",
    "solve_comparator",
    "step",
    "theory_constants",
    "tuned_params",
]
