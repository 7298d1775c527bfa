"""Penalty-barrier solver for box-constrained nonlinear programs with equality constraints.

The merit function is minimized directly along directions from strictly
convex subproblems, each solved by a primal-dual predictor-corrector method.
"""

from .driver import SolveReport, SolverConfig, convergence_order, solve
from .globalization import LineSearchParams
from .merit import PenaltyBarrier, eval_grad_phi, eval_hess_phi, eval_lambda, eval_phi, kkt_residual
from .problem import NlpProblem, PenaltyParams, check_derivatives
from .psd import project_psd
from .registry import available_problems, registry_get
from .subqp import SubQp, assemble_subqp, solve_subqp

__version__ = "0.1.0"

__all__ = [
    "LineSearchParams",
    "NlpProblem",
    "PenaltyBarrier",
    "PenaltyParams",
    "SolveReport",
    "SolverConfig",
    "SubQp",
    "assemble_subqp",
    "available_problems",
    "check_derivatives",
    "convergence_order",
    "eval_grad_phi",
    "eval_hess_phi",
    "eval_lambda",
    "eval_phi",
    "kkt_residual",
    "project_psd",
    "registry_get",
    "solve",
    "solve_subqp",
]
