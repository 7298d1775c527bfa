"""Penalty-barrier merit function and its derivatives.

    phi(x) = f(x) + rho/2 |x|_S^2 + 1/(2 omega) |c(x)|^2
             - tau * sum(log(1 + x) + log(1 - x))

defined on the open unit box. The multiplier estimate is always recomputed
as ``lam = -c(x) / omega``; it is never carried as independent state.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from .problem import NlpProblem, PenaltyParams


EPS = float(np.finfo(float).eps)

# Multiple of eps times the evaluated magnitudes treated as noise in merit differences.
ROUNDING_NOISE = 100.0


class DomainError(ValueError):
    """Raised when a point lies on or outside the unit box."""


@dataclasses.dataclass(frozen=True)
class MeritEvaluation:
    x: np.ndarray
    phi: float
    grad_phi: np.ndarray
    lam: np.ndarray
    hess_phi: Optional[np.ndarray] = None


def in_box(x: np.ndarray) -> bool:
    x = np.asarray(x)
    return bool(np.all(np.isfinite(x)) and np.all(np.abs(x) < 1.0))


def _require_interior(x):
    if not in_box(x):
        raise DomainError("point is not strictly inside the unit box")


def barrier_value(x: np.ndarray) -> float:
    return float(np.sum(np.log1p(x) + np.log1p(-x)))


def barrier_grad(tau: float, x: np.ndarray) -> np.ndarray:
    """Gradient of ``-tau * sum(log(1+x) + log(1-x))``."""
    return -tau / (1.0 + x) + tau / (1.0 - x)


def barrier_curvature(tau: float, x: np.ndarray) -> np.ndarray:
    return tau / (1.0 + x) ** 2 + tau / (1.0 - x) ** 2


class PenaltyBarrier:
    """Evaluator of the merit function for a fixed problem and parameters."""

    def __init__(self, problem: NlpProblem, params: PenaltyParams):
        self.problem = problem
        self.params = params

    @property
    def n(self) -> int:
        return self.problem.n

    def lam(self, x: np.ndarray) -> np.ndarray:
        return -self.problem.c(x) / self.params.omega

    def f(self, x: np.ndarray) -> float:
        return self.problem.f(x)

    def c(self, x: np.ndarray) -> np.ndarray:
        return self.problem.c(x)

    def phi(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        _require_interior(x)
        p, pp = self.problem, self.params
        c = p.c(x)
        return float(
            p.f(x)
            + 0.5 * pp.rho * (x @ pp.S_times(x))
            + (c @ c) / (2.0 * pp.omega)
            - pp.tau * barrier_value(x)
        )

    def phi_or_inf(self, x: np.ndarray) -> float:
        try:
            value = self.phi(x)
        except DomainError:
            return np.inf
        return value if np.isfinite(value) else np.inf

    def phi_diff(self, x_new: np.ndarray, x: np.ndarray) -> float:
        """``phi(x_new) - phi(x)``, or ``inf`` if ``x_new`` is not interior.

        The regularizer, penalty and barrier parts are differenced
        analytically. When the result is below the rounding noise of the
        ``f`` and ``c`` evaluations, the trapezoidal estimate
        ``(grad phi(x) + grad phi(x_new))^T (x_new - x) / 2`` is returned
        instead, which keeps a reliable sign for very short steps.
        """
        x_new = np.asarray(x_new, dtype=float)
        x = np.asarray(x, dtype=float)
        _require_interior(x)
        if not in_box(x_new):
            return np.inf
        p, pp = self.problem, self.params
        d = x_new - x
        f_new, f_old = p.f(x_new), p.f(x)
        c_new, c_old = p.c(x_new), p.c(x)
        barrier = np.sum(np.log1p(d / (1.0 + x)) + np.log1p(-d / (1.0 - x)))
        value = (
            (f_new - f_old)
            + 0.5 * pp.rho * (d @ pp.S_times(x_new + x))
            + ((c_new - c_old) @ (c_new + c_old)) / (2.0 * pp.omega)
            - pp.tau * barrier
        )
        if not np.isfinite(value):
            return np.inf
        c_size = float(np.abs(c_new).sum() + np.abs(c_old).sum())
        noise = ROUNDING_NOISE * EPS * (1.0 + abs(f_new) + abs(f_old) + c_size * (1.0 + c_size) / pp.omega)
        if abs(value) > noise:
            return float(value)
        return float(0.5 * (self.grad(x) + self.grad(x_new)) @ d)

    def smooth_grad(self, x: np.ndarray) -> np.ndarray:
        """``grad f(x) + rho S x``; the part shared with the subproblem gradient."""
        return self.problem.grad_f(x) + self.params.rho * self.params.S_times(x)

    def penalty_grad(self, x: np.ndarray, c: np.ndarray, jac: np.ndarray) -> np.ndarray:
        # (1/omega) * jac @ c, written the same way the subproblem evaluates it
        return jac @ (c / self.params.omega)

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _require_interior(x)
        c = self.problem.c(x)
        jac = self.problem.jac_c(x)
        return self.smooth_grad(x) + self.penalty_grad(x, c, jac) + barrier_grad(self.params.tau, x)

    def hess(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _require_interior(x)
        p, pp = self.problem, self.params
        lam = self.lam(x)
        jac = p.jac_c(x)
        H = p.hess_lag(x, lam)
        out = pp.rho * pp.S_matrix(p.n) + H + (jac @ jac.T) / pp.omega
        out[np.diag_indices_from(out)] += barrier_curvature(pp.tau, x)
        return 0.5 * (out + out.T)

    def evaluate(self, x: np.ndarray, hessian: bool = False) -> MeritEvaluation:
        x = np.array(x, dtype=float)
        return MeritEvaluation(
            x=x,
            phi=self.phi(x),
            grad_phi=self.grad(x),
            lam=self.lam(x),
            hess_phi=self.hess(x) if hessian else None,
        )


def eval_phi(p: NlpProblem, params: PenaltyParams, x: np.ndarray) -> float:
    return PenaltyBarrier(p, params).phi(x)


def eval_grad_phi(p: NlpProblem, params: PenaltyParams, x: np.ndarray) -> np.ndarray:
    return PenaltyBarrier(p, params).grad(x)


def eval_hess_phi(p: NlpProblem, params: PenaltyParams, x: np.ndarray) -> np.ndarray:
    return PenaltyBarrier(p, params).hess(x)


def eval_lambda(p: NlpProblem, params: PenaltyParams, x: np.ndarray) -> np.ndarray:
    return -p.c(np.asarray(x, dtype=float)) / params.omega


def kkt_residual(p: NlpProblem, params: PenaltyParams, z) -> float:
    """Infinity norm of the regularized KKT residual at ``z = (x, lam, mu_l, mu_r)``.

    ``z`` may be a :class:`~penbar.subqp.PrimalDualPoint` or any object with
    ``x``, ``lam``, ``mu_l`` and ``mu_r`` attributes.
    """
    x = np.asarray(z.x, dtype=float)
    lam = np.asarray(z.lam, dtype=float)
    mu_l = np.asarray(z.mu_l, dtype=float)
    mu_r = np.asarray(z.mu_r, dtype=float)
    stationarity = p.grad_f(x) + params.rho * params.S_times(x) - p.jac_c(x) @ lam - mu_l + mu_r
    feasibility = p.c(x) + params.omega * lam
    comp_l = mu_l * (1.0 + x) - params.tau
    comp_r = mu_r * (1.0 - x) - params.tau
    stacked = np.concatenate([stationarity, feasibility, comp_l, comp_r])
    return float(np.abs(stacked).max()) if stacked.size else 0.0
