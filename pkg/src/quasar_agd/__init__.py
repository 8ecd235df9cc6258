"""Accelerated first-order methods for smooth quasar-convex minimization."""

from .core import (
    ConfigurationError,
    DifferentiableOracle,
    IterateRecord,
    OracleError,
    QuasarProblem,
    SolverTrace,
    TerminationReason,
    counted_eval,
    finite_diff_gradient,
)
from .instances import (
    HardInstanceScaled,
    HardInstanceUnscaled,
    QuadraticInstance,
    instance_from_spec,
    quadratic_oracle,
    upsilon,
    upsilon_prime,
)
from .linesearch import LineSearchOutcome, LineSearchParams, binary_line_search, evaluation_bound
from .solvers import (
    omega,
    solve_gd,
    solve_nonstrong_qc,
    solve_strongly_qc,
    solve_via_regularization,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DifferentiableOracle",
    "HardInstanceScaled",
    "HardInstanceUnscaled",
    "IterateRecord",
    "LineSearchOutcome",
    "LineSearchParams",
    "OracleError",
    "QuadraticInstance",
    "QuasarProblem",
    "SolverTrace",
    "TerminationReason",
    "binary_line_search",
    "counted_eval",
    "evaluation_bound",
    "finite_diff_gradient",
    "instance_from_spec",
    "omega",
    "quadratic_oracle",
    "solve_gd",
    "solve_nonstrong_qc",
    "solve_strongly_qc",
    "solve_via_regularization",
    "upsilon",
    "upsilon_prime",
]
