"""Problem definition for box-constrained, equality-penalized NLPs.

A problem is::

    min f(x)   s.t.  c(x) = 0,  -1 <= x <= 1

The box is fixed to the unit cube; problems with other bounds must be
rescaled by their author.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Any, Callable, Mapping, Optional

import numpy as np

EPS = np.finfo(float).eps

Vector = np.ndarray
Matrix = np.ndarray


@dataclasses.dataclass(frozen=True)
class NlpProblem:
    """User-supplied functions and derivatives of an NLP.

    Attributes:
      n: Number of variables.
      m: Number of equality constraints (may exceed ``n``).
      eval_f: Objective, ``x -> float``.
      eval_c: Constraints, ``x -> (m,)``.
      eval_grad_f: Objective gradient, ``x -> (n,)``.
      eval_jac_c: Constraint gradients as columns, ``x -> (n, m)``.
      eval_hess_lag: Hessian of ``f(x) - lam @ c(x)``, ``(x, lam) -> (n, n)``.
      eval_hess_psd: Optional user-supplied replacement for the Lagrangian
        Hessian that keeps the penalized curvature positive semidefinite.
      name: Identifier used in reports.
      x0: Default starting point.
      meta: Problem data exposed for inspection (e.g. QP matrices).
    """

    n: int
    m: int
    eval_f: Callable[[Vector], float]
    eval_c: Callable[[Vector], Vector]
    eval_grad_f: Callable[[Vector], Vector]
    eval_jac_c: Callable[[Vector], Matrix]
    eval_hess_lag: Callable[[Vector, Vector], Matrix]
    eval_hess_psd: Optional[Callable[[Vector, Vector], Matrix]] = None
    name: str = "problem"
    x0: Optional[Vector] = None
    meta: Mapping[str, Any] = dataclasses.field(default_factory=dict, compare=False)

    def initial_point(self) -> Vector:
        if self.x0 is None:
            return np.zeros(self.n)
        return np.array(self.x0, dtype=float)

    # Shape-normalizing wrappers. Registry problems and user code may return
    # lists or scalars; the solver only ever sees float arrays of fixed shape.
    def f(self, x: Vector) -> float:
        return float(self.eval_f(x))

    def c(self, x: Vector) -> Vector:
        if self.m == 0:
            return np.zeros(0)
        return np.asarray(self.eval_c(x), dtype=float).reshape(self.m)

    def grad_f(self, x: Vector) -> Vector:
        return np.asarray(self.eval_grad_f(x), dtype=float).reshape(self.n)

    def jac_c(self, x: Vector) -> Matrix:
        if self.m == 0:
            return np.zeros((self.n, 0))
        return np.asarray(self.eval_jac_c(x), dtype=float).reshape(self.n, self.m)

    def hess_lag(self, x: Vector, lam: Vector) -> Matrix:
        return np.asarray(self.eval_hess_lag(x, lam), dtype=float).reshape(self.n, self.n)

    def hess_psd(self, x: Vector, lam: Vector) -> Optional[Matrix]:
        if self.eval_hess_psd is None:
            return None
        return np.asarray(self.eval_hess_psd(x, lam), dtype=float).reshape(self.n, self.n)


@dataclasses.dataclass(frozen=True)
class PenaltyParams:
    """Regularization parameters held fixed for a whole solve.

    ``S`` defaults to the identity of the problem dimension.
    """

    rho: float = 1e-7
    omega: float = 1e-7
    tau: float = 1e-7
    S: Optional[Matrix] = None
    tol: float = 1e-8
    max_outer_iter: int = 10000

    def __post_init__(self):
        for name in ("rho", "omega", "tau", "tol"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if self.max_outer_iter < 0:
            raise ValueError("max_outer_iter must be non-negative")
        if self.S is not None:
            S = np.asarray(self.S, dtype=float)
            if S.ndim != 2 or S.shape[0] != S.shape[1]:
                raise ValueError(f"S must be square, got shape {S.shape}")
            if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
                raise ValueError("S must be symmetric")
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError as exc:
                raise ValueError("S must be positive definite") from exc
            object.__setattr__(self, "S", S)

    def S_matrix(self, n: int) -> Matrix:
        if self.S is None:
            return np.eye(n)
        if self.S.shape != (n, n):
            raise ValueError(f"S has shape {self.S.shape}, problem has n={n}")
        return self.S

    def S_times(self, x: Vector) -> Vector:
        if self.S is None:
            return np.array(x, dtype=float)
        return self.S @ x

    def replace(self, **changes) -> "PenaltyParams":
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class DerivativeReport:
    """Max relative errors of analytic derivatives against central differences."""

    grad_f: float
    jac_c: float
    hess_lag: float

    @property
    def worst(self) -> float:
        return max(self.grad_f, self.jac_c, self.hess_lag)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.worst <= tol


def relative_error(analytic: np.ndarray, approx: np.ndarray) -> float:
    """Max-norm error scaled by the larger operand (floored at 1)."""
    analytic = np.asarray(analytic, dtype=float)
    approx = np.asarray(approx, dtype=float)
    if analytic.size == 0:
        return 0.0
    scale = max(1.0, float(np.abs(analytic).max()), float(np.abs(approx).max()))
    return float(np.abs(analytic - approx).max() / scale)


def fd_step() -> float:
    return EPS ** (1.0 / 3.0)


def central_difference(fun: Callable[[Vector], np.ndarray], x: Vector, h: Optional[float] = None) -> np.ndarray:
    """Central-difference derivative of ``fun`` at ``x``.

    Returns an array of shape ``(n,) + fun(x).shape`` whose ``i``-th slice is
    the partial derivative with respect to ``x[i]``.
    """
    h = fd_step() if h is None else h
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.asarray(fun(xp), dtype=float) - np.asarray(fun(xm), dtype=float)) / (2 * h))
    return np.array(cols)


def check_derivatives(p: NlpProblem, x: Vector, seed: int = 0) -> DerivativeReport:
    """Compare analytic derivatives of ``p`` with central differences at ``x``.

    The Lagrangian Hessian is checked at a random multiplier drawn from
    ``seed``. Evaluation errors at perturbed points propagate.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise ValueError(f"x must have shape ({p.n},)")
    if not np.all(np.abs(x) < 1):
        raise ValueError("x must be strictly inside the unit box")
    h = min(fd_step(), 0.5 * float(np.min(1 - np.abs(x))))
    rng = np.random.default_rng(seed)
    lam = rng.standard_normal(p.m)

    err_g = relative_error(p.grad_f(x), central_difference(p.f, x, h))
    if p.m:
        # central_difference stacks d/dx_i along axis 0, i.e. (n, m): matches jac_c.
        err_j = relative_error(p.jac_c(x), central_difference(p.c, x, h))
    else:
        err_j = 0.0

    def grad_lag(xx):
        return p.grad_f(xx) - p.jac_c(xx) @ lam

    err_h = relative_error(p.hess_lag(x, lam), central_difference(grad_lag, x, h))
    return DerivativeReport(grad_f=err_g, jac_c=err_j, hess_lag=err_h)


_SPLITTER = 134217729.0  # 2**27 + 1


def _two_product(a: np.ndarray, b: np.ndarray):
    """Error-free products: ``a * b == p + e`` exactly (barring overflow)."""
    p = a * b
    t = _SPLITTER * a
    a_hi = t - (t - a)
    a_lo = a - a_hi
    t = _SPLITTER * b
    b_hi = t - (t - b)
    b_lo = b - b_hi
    e = ((a_hi * b_hi - p) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo
    return p, e


def accurate_affine(A: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Correctly rounded ``A @ x - b``.

    With a small penalty parameter the merit gradient multiplies the
    constraint residual by ``1/omega``, so ordinary rounding in ``A @ x``
    can dominate it near a solution.
    """
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    p, e = _two_product(A, x[None, :])
    return np.array([math.fsum(np.concatenate([p[i], e[i], [-b[i]]])) for i in range(A.shape[0])])
