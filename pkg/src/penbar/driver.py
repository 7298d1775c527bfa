"""Outer iteration: minimize the merit function with subproblem directions."""

from __future__ import annotations

import dataclasses
import time
from typing import List, Optional

import numpy as np

from . import psd
from .globalization import (
    STANDARD,
    LineSearchError,
    LineSearchParams,
    WatchdogState,
    armijo_step,
    newton_polish,
    watchdog_step,
)
from .merit import DomainError, PenaltyBarrier
from .problem import NlpProblem, PenaltyParams
from .subqp import (
    DEFAULT_INNER_MAX_ITER,
    InnerSolveError,
    assemble_subqp,
    inner_tolerance,
    q_grad,
    solve_subqp,
)

CONVERGED = "converged"
MAX_ITER = "max_iter"
LINE_SEARCH_FAILURE = "line_search_failure"
INNER_FAILURE = "inner_failure"

# Starting points on or outside the box are pulled to this distance from it.
CLAMP_MARGIN = 1e-3

HESSIAN_MODES = ("auto", "projection")


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    """Settings of one solve.

    ``hessian="auto"`` uses the problem's ``eval_hess_psd`` hook when present
    and the eigenvalue projection otherwise; ``"projection"`` ignores the hook.
    """

    params: PenaltyParams = PenaltyParams()
    line_search: LineSearchParams = LineSearchParams()
    watchdog_enabled: bool = True
    newton_polish_enabled: bool = True
    inner_max_iter: int = DEFAULT_INNER_MAX_ITER
    hessian: str = "auto"
    psd_strategy: str = "clip"
    watchdog_ell: int = 5
    backend: Optional[str] = None
    verbose: bool = False

    def __post_init__(self):
        if self.hessian not in HESSIAN_MODES:
            raise ValueError(f"hessian must be one of {HESSIAN_MODES}")
        if self.inner_max_iter < 1:
            raise ValueError("inner_max_iter must be positive")

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class IterationRecord:
    """Quantities at the start of one outer iteration and the step taken from there."""

    k: int
    phi: float
    grad_norm2: float
    grad_inf: float
    x_inf: float
    alpha: float
    used_exact: bool
    polish_accepted: bool
    mode: str
    inner_iterations: int
    slope: float
    grad_match_error: float
    watchdog_restored: bool = False
    inner_retried: bool = False


@dataclasses.dataclass(frozen=True)
class SolveReport:
    status: str
    problem: str
    n: int
    m: int
    x_final: np.ndarray
    phi_final: float
    grad_phi_inf: float
    grad_phi_norm2: float
    lambda_final: np.ndarray  # multiplier estimate -c(x_final)/omega
    lambda_inner: np.ndarray  # multipliers of the last subproblem solve
    outer_iterations: int
    total_inner_iterations: int
    records: tuple
    wall_time: float
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def time_per_iter_ms(self) -> float:
        return 1e3 * self.wall_time / max(self.outer_iterations, 1)

    def grad_history(self) -> np.ndarray:
        """``|grad phi|_2`` at every iterate, the final one included."""
        return np.array([r.grad_norm2 for r in self.records] + [self.grad_phi_norm2])


@dataclasses.dataclass(frozen=True)
class OrderEstimate:
    order: float
    defined: bool
    points: int


ORDER_WINDOW_CEILING = 1e-2
ORDER_MIN_POINTS = 4


def convergence_order(report: SolveReport) -> OrderEstimate:
    """Least-squares slope of ``log g_{k+1}`` against ``log g_k`` on the tail.

    The window is the longest trailing run of positive, strictly decreasing
    gradient norms below 1e-2. Fewer than four points give an undefined
    estimate.
    """
    g = report.grad_history()
    start = len(g)
    while start > 0:
        val = g[start - 1]
        if not (0.0 < val < ORDER_WINDOW_CEILING):
            break
        if start < len(g) and not val > g[start]:
            break
        start -= 1
    tail = g[start:]
    if tail.size < ORDER_MIN_POINTS:
        return OrderEstimate(float("nan"), False, int(tail.size))
    logs = np.log(tail)
    slope = np.polyfit(logs[:-1], logs[1:], 1)[0]
    return OrderEstimate(float(slope), True, int(tail.size))


def clamp_start(x0: np.ndarray) -> np.ndarray:
    x0 = np.array(x0, dtype=float)
    x0[~np.isfinite(x0)] = 0.0
    bound = 1.0 - CLAMP_MARGIN
    return np.clip(x0, -bound, bound) if np.abs(x0).max(initial=0.0) >= 1.0 else x0


def _hessian_choice(p, params, x, lam, mode, strategy):
    H = p.hess_lag(x, lam)
    jac = p.jac_c(x)
    if mode == "auto":
        hook = p.hess_psd(x, lam)
        if hook is not None:
            return hook, bool(np.array_equal(hook, H))
    proj = psd.project_psd(H, jac, params.omega, strategy)
    return proj.h_tilde, proj.used_exact


def solve(p: NlpProblem, x0: Optional[np.ndarray] = None, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Run the outer iteration from ``x0`` (default: the problem's initial point).

    Never raises for numerical failures; the outcome is in ``status``.
    """
    t0 = time.perf_counter()
    params = cfg.params
    merit = PenaltyBarrier(p, params)
    x = clamp_start(p.initial_point() if x0 is None else np.asarray(x0, dtype=float).reshape(p.n))
    watchdog = WatchdogState.start(merit, x, cfg.watchdog_ell)
    records: List[IterationRecord] = []
    total_inner = 0
    lam_inner = np.zeros(p.m)
    status = MAX_ITER
    message = ""

    for k in range(params.max_outer_iter + 1):
        phi = merit.phi(x)
        grad = merit.grad(x)
        g2 = float(np.linalg.norm(grad))
        if g2 <= params.tol:
            status = CONVERGED
            break
        if k == params.max_outer_iter:
            break

        lam = merit.lam(x)
        retried = False
        try:
            h_tilde, used_exact = _hessian_choice(p, params, x, lam, cfg.hessian, cfg.psd_strategy)
            sub = assemble_subqp(p, params, x, h_tilde)
            x_hat, z, stats = solve_subqp(sub, inner_tolerance(params.tol, sub), cfg.inner_max_iter, cfg.backend)
        except (InnerSolveError, np.linalg.LinAlgError) as first:
            # one structured retry with a more convex model
            retried = True
            strategy = "shift" if (cfg.hessian == "projection" or p.eval_hess_psd is None) else cfg.psd_strategy
            try:
                H = p.hess_lag(x, lam)
                proj = psd.project_psd(H, p.jac_c(x), params.omega, strategy)
                h_tilde, used_exact = proj.h_tilde, proj.used_exact
                sub = assemble_subqp(p, params, x, h_tilde)
                x_hat, z, stats = solve_subqp(sub, inner_tolerance(params.tol, sub), cfg.inner_max_iter,
                                              cfg.backend)
            except (InnerSolveError, np.linalg.LinAlgError) as second:
                status = INNER_FAILURE
                message = f"inner solve failed twice: {first}; {second}"
                break
        total_inner += stats.pd_iterations
        lam_inner = z.lam.copy()
        v = x_hat - x
        slope = float(grad @ v)
        match = float(np.abs(q_grad(sub, x) - grad).max(initial=0.0))

        try:
            if cfg.watchdog_enabled:
                step, watchdog = watchdog_step(watchdog, merit, x, v, cfg.line_search)
            else:
                step = armijo_step(merit, x, v, cfg.line_search)
            x_next, alpha, mode, restored = step.x, step.alpha, step.mode, step.restored
        except (LineSearchError, DomainError) as exc:
            x_next, alpha, mode, restored = x, 0.0, STANDARD, False
            polished, accepted = newton_polish(p, params, x)
            if not accepted:
                records.append(IterationRecord(k, phi, g2, float(np.abs(grad).max()), float(np.abs(x).max()),
                                               0.0, used_exact, False, mode, stats.pd_iterations, slope,
                                               match, False, retried))
                status = LINE_SEARCH_FAILURE
                message = str(exc)
                x_next = x
                break
            x_next = polished
            watchdog = WatchdogState.start(merit, x_next, cfg.watchdog_ell)
            records.append(IterationRecord(k, phi, g2, float(np.abs(grad).max()), float(np.abs(x).max()),
                                           0.0, used_exact, True, mode, stats.pd_iterations, slope, match,
                                           False, retried))
            x = x_next
            continue

        polish_accepted = False
        if cfg.newton_polish_enabled:
            x_next, polish_accepted = newton_polish(p, params, x_next)
            if polish_accepted and cfg.watchdog_enabled:
                watchdog.observe(merit, x_next)

        records.append(IterationRecord(
            k=k,
            phi=phi,
            grad_norm2=g2,
            grad_inf=float(np.abs(grad).max()),
            x_inf=float(np.abs(x).max()),
            alpha=float(alpha),
            used_exact=used_exact,
            polish_accepted=polish_accepted,
            mode=mode,
            inner_iterations=stats.pd_iterations,
            slope=slope,
            grad_match_error=match,
            watchdog_restored=restored,
            inner_retried=retried,
        ))
        if cfg.verbose:
            print(f"{p.name} k={k:4d} phi={phi:+.10e} |g|={g2:.3e} alpha={alpha:.3e} "
                  f"mode={mode} polish={int(polish_accepted)} inner={stats.pd_iterations}")
        x = x_next

    grad = merit.grad(x)
    return SolveReport(
        status=status,
        problem=p.name,
        n=p.n,
        m=p.m,
        x_final=x,
        phi_final=merit.phi(x),
        grad_phi_inf=float(np.abs(grad).max(initial=0.0)),
        grad_phi_norm2=float(np.linalg.norm(grad)),
        lambda_final=merit.lam(x),
        lambda_inner=lam_inner,
        outer_iterations=len(records),
        total_inner_iterations=total_inner,
        records=tuple(records),
        wall_time=time.perf_counter() - t0,
        message=message,
    )
