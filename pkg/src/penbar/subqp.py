"""Penalty-barrier convex subproblem and its primal-dual solver.

The subproblem is

    q(x) = 1/2 x^T Q x + c^T x + 1/(2 omega) |A x - b|^2
           - tau * sum(log(1 + x) + log(1 - x))

over the open unit box. It is solved by centering on ``psi_nu`` from
``x = 0`` and then following the roots of ``F_nu`` down to ``nu = tau`` with
a Mehrotra predictor-corrector loop (see :mod:`penbar.kernels`).

Affine terms are evaluated relative to a reference point ``x_ref`` (the outer
iterate when assembled by :func:`assemble_subqp`). This is algebraically the
same function, but ``Q x + c`` and ``A x - b`` are never formed by
cancelling large numbers, so ``grad q(x_ref)`` reproduces ``grad phi(x_ref)``
to rounding.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np
import scipy.linalg

from . import kernels
from .merit import PenaltyBarrier, barrier_curvature, barrier_grad, barrier_value, in_box
from .problem import EPS, NlpProblem, PenaltyParams

DEFAULT_INNER_MAX_ITER = 200
CENTERING_THRESHOLD = 0.25
CENTERING_NEWTON_STEPS = 10
REFINE_STEPS = 3
_NU_LIMIT = 1e300


class InnerSolveError(RuntimeError):
    """The subproblem solver could not deliver a minimizer."""

    def __init__(self, message: str, stats: Optional["InnerSolveStats"] = None):
        super().__init__(message)
        self.stats = stats


class CenteringError(InnerSolveError):
    pass


class KktError(InnerSolveError):
    pass


class InnerIterationLimit(InnerSolveError):
    pass


@dataclasses.dataclass(frozen=True)
class SubQp:
    """Data of one subproblem.

    ``x_ref``, ``g_ref = Q x_ref + c_lin`` and ``r_ref = A x_ref - b`` default
    to the origin-anchored values.
    """

    Q: np.ndarray
    c_lin: np.ndarray
    A: np.ndarray
    b: np.ndarray
    omega: float
    tau: float
    x_ref: Optional[np.ndarray] = None
    g_ref: Optional[np.ndarray] = None
    r_ref: Optional[np.ndarray] = None

    def __post_init__(self):
        Q = np.ascontiguousarray(self.Q, dtype=float)
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise ValueError(f"Q must be square, got {Q.shape}")
        c_lin = np.ascontiguousarray(self.c_lin, dtype=float).reshape(n)
        A = np.ascontiguousarray(self.A, dtype=float).reshape(-1, n)
        b = np.ascontiguousarray(self.b, dtype=float).reshape(A.shape[0])
        if not (self.omega > 0 and self.tau > 0):
            raise ValueError("omega and tau must be positive")
        set_ = object.__setattr__
        set_(self, "Q", Q)
        set_(self, "c_lin", c_lin)
        set_(self, "A", A)
        set_(self, "b", b)
        if self.x_ref is None:
            set_(self, "x_ref", np.zeros(n))
            set_(self, "g_ref", c_lin.copy())
            set_(self, "r_ref", -b)
        else:
            x_ref = np.ascontiguousarray(self.x_ref, dtype=float).reshape(n)
            set_(self, "x_ref", x_ref)
            g_ref = Q @ x_ref + c_lin if self.g_ref is None else self.g_ref
            r_ref = A @ x_ref - b if self.r_ref is None else self.r_ref
            set_(self, "g_ref", np.ascontiguousarray(g_ref, dtype=float).reshape(n))
            set_(self, "r_ref", np.ascontiguousarray(r_ref, dtype=float).reshape(A.shape[0]))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]


@dataclasses.dataclass
class PrimalDualPoint:
    """``z = (x, lam, mu_l, mu_r)``; interior when ``|x| < 1`` and ``mu > 0``."""

    x: np.ndarray
    lam: np.ndarray
    mu_l: np.ndarray
    mu_r: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam, self.mu_l, self.mu_r])

    @classmethod
    def from_stacked(cls, v: np.ndarray, n: int, m: int) -> "PrimalDualPoint":
        v = np.asarray(v, dtype=float)
        return cls(v[:n].copy(), v[n:n + m].copy(), v[n + m:2 * n + m].copy(), v[2 * n + m:].copy())

    def copy(self) -> "PrimalDualPoint":
        return PrimalDualPoint(self.x.copy(), self.lam.copy(), self.mu_l.copy(), self.mu_r.copy())

    def is_interior(self) -> bool:
        return in_box(self.x) and bool(np.all(self.mu_l > 0) and np.all(self.mu_r > 0))


@dataclasses.dataclass
class InnerSolveStats:
    centering_nu: float
    pd_iterations: int
    final_residual: float
    trace: np.ndarray  # rows of (nu, alpha, residual, nu_hat)
    tolerance: float = 0.0  # residual target actually applied
    status: str = "converged"
    backend: str = kernels.DEFAULT_BACKEND
    refine_steps: int = 0


def assemble_subqp(p: NlpProblem, params: PenaltyParams, x_k: np.ndarray, h_tilde: np.ndarray) -> SubQp:
    """Build the subproblem at ``x_k`` whose gradient there matches ``grad phi``."""
    x_k = np.asarray(x_k, dtype=float)
    if not in_box(x_k):
        raise ValueError("x_k must be strictly inside the unit box")
    merit = PenaltyBarrier(p, params)
    h_tilde = np.asarray(h_tilde, dtype=float)
    Q = h_tilde + params.rho * params.S_matrix(p.n)
    Q = 0.5 * (Q + Q.T)
    grad_f = p.grad_f(x_k)
    jac = p.jac_c(x_k)
    c_k = p.c(x_k)
    A = jac.T
    return SubQp(
        Q=Q,
        c_lin=grad_f - h_tilde @ x_k,
        A=A,
        b=-c_k + A @ x_k,
        omega=params.omega,
        tau=params.tau,
        x_ref=x_k,
        g_ref=merit.smooth_grad(x_k),
        r_ref=c_k,
    )


def quad_grad(sub: SubQp, x: np.ndarray) -> np.ndarray:
    """``Q x + c_lin``."""
    return sub.Q @ (x - sub.x_ref) + sub.g_ref


def affine_residual(sub: SubQp, x: np.ndarray) -> np.ndarray:
    """``A x - b``."""
    return sub.A @ (x - sub.x_ref) + sub.r_ref


def smooth_grad(sub: SubQp, x: np.ndarray) -> np.ndarray:
    # same association as PenaltyBarrier.penalty_grad
    return quad_grad(sub, x) + sub.A.T @ (affine_residual(sub, x) / sub.omega)


def q_value(sub: SubQp, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if not in_box(x):
        raise ValueError("x must be strictly inside the unit box")
    d = x - sub.x_ref
    const = 0.5 * sub.x_ref @ sub.Q @ sub.x_ref + sub.c_lin @ sub.x_ref
    r = affine_residual(sub, x)
    return float(const + sub.g_ref @ d + 0.5 * d @ sub.Q @ d + (r @ r) / (2 * sub.omega)
                 - sub.tau * barrier_value(x))


def q_grad(sub: SubQp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return smooth_grad(sub, x) + barrier_grad(sub.tau, x)


def penalized_hessian(sub: SubQp) -> np.ndarray:
    """``Q + A^T A / omega``."""
    return sub.Q + (sub.A.T @ sub.A) / sub.omega


def eval_psi_nu(sub: SubQp, nu: float, x: np.ndarray):
    """Value, gradient and Hessian of the centering function ``psi_nu`` at ``x``."""
    x = np.asarray(x, dtype=float)
    if not in_box(x):
        raise ValueError("x must be strictly inside the unit box")
    d = x - sub.x_ref
    const = 0.5 * sub.x_ref @ sub.Q @ sub.x_ref + sub.c_lin @ sub.x_ref
    r = affine_residual(sub, x)
    quad = const + sub.g_ref @ d + 0.5 * d @ sub.Q @ d + (r @ r) / (2 * sub.omega)
    value = quad / nu - barrier_value(x)
    grad = smooth_grad(sub, x) / nu + barrier_grad(1.0, x)
    hess = penalized_hessian(sub) / nu
    hess[np.diag_indices_from(hess)] += barrier_curvature(1.0, x)
    return float(value), grad, hess


def initial_centering(sub: SubQp):
    """Find ``nu`` with a small centering gradient at 0, then take 10 Newton steps.

    Returns ``(x, nu)``.
    """
    n = sub.n
    x = np.zeros(n)
    g0 = smooth_grad(sub, x)
    if not np.all(np.isfinite(g0)):
        raise CenteringError("non-finite subproblem gradient at the origin")
    nu = 1.0
    while np.linalg.norm(g0 / nu) >= CENTERING_THRESHOLD:
        nu *= 10.0
        if nu > _NU_LIMIT:
            raise CenteringError("centering parameter overflow")
    P = penalized_hessian(sub)
    for _ in range(CENTERING_NEWTON_STEPS):
        grad = smooth_grad(sub, x) / nu + barrier_grad(1.0, x)
        hess = P / nu
        hess[np.diag_indices_from(hess)] += barrier_curvature(1.0, x)
        try:
            step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(hess, lower=True), grad)
        except np.linalg.LinAlgError as exc:
            raise CenteringError("centering Hessian is not positive definite") from exc
        x = x - step
        if not in_box(x):
            raise CenteringError("centering Newton step left the unit box")
    return x, nu


def eval_F(sub: SubQp, nu: float, z: PrimalDualPoint) -> np.ndarray:
    """Stacked residual ``F_nu(z)`` of length ``3n + m``."""
    x = np.asarray(z.x, dtype=float)
    lam = np.asarray(z.lam, dtype=float)
    r1 = quad_grad(sub, x) - sub.A.T @ lam - z.mu_l + z.mu_r
    r2 = affine_residual(sub, x) + sub.omega * lam
    r3 = z.mu_l * (1.0 + x) - nu
    r4 = z.mu_r * (1.0 - x) - nu
    return np.concatenate([r1, r2, r3, r4])


def jacobian_F(sub: SubQp, z: PrimalDualPoint) -> np.ndarray:
    """Dense Jacobian ``DF_nu(z)``; it does not depend on ``nu``."""
    n, m = sub.n, sub.m
    N = 3 * n + m
    J = np.zeros((N, N))
    ix = slice(0, n)
    il = slice(n, n + m)
    iL = slice(n + m, 2 * n + m)
    iR = slice(2 * n + m, N)
    I = np.eye(n)
    J[ix, ix] = sub.Q
    J[ix, il] = -sub.A.T
    J[ix, iL] = -I
    J[ix, iR] = I
    J[il, ix] = sub.A
    J[il, il] = sub.omega * np.eye(m)
    J[iL, ix] = np.diag(z.mu_l)
    J[iL, iL] = np.diag(1.0 + z.x)
    J[iR, ix] = -np.diag(z.mu_r)
    J[iR, iR] = np.diag(1.0 - z.x)
    return J


class KktSolver:
    """Solves ``DF_nu(z) dz = rhs`` through the ``n x n`` Schur complement.

    The complementarity rows and the ``lam`` row are eliminated (both are
    diagonal), leaving

        Sigma = Q + A^T A / omega + diag(mu_l / (1 + x)) + diag(mu_r / (1 - x)).
    """

    def __init__(self, sub: SubQp, z: PrimalDualPoint):
        self.sub = sub
        self.z = z
        self.xl = 1.0 + z.x
        self.xr = 1.0 - z.x
        sigma = penalized_hessian(sub)
        sigma[np.diag_indices_from(sigma)] += z.mu_l / self.xl + z.mu_r / self.xr
        self.sigma = sigma
        try:
            self._factor = scipy.linalg.cho_factor(sigma, lower=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise KktError("Schur complement is not positive definite") from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        sub, z = self.sub, self.z
        n, m = sub.n, sub.m
        rhs = np.asarray(rhs, dtype=float)
        s1, s2 = rhs[:n], rhs[n:n + m]
        s3, s4 = rhs[n + m:2 * n + m], rhs[2 * n + m:]
        reduced = s1 + sub.A.T @ (s2 / sub.omega) + s3 / self.xl - s4 / self.xr
        dx = scipy.linalg.cho_solve(self._factor, reduced)
        dlam = (s2 - sub.A @ dx) / sub.omega
        dmu_l = (s3 - z.mu_l * dx) / self.xl
        dmu_r = (s4 + z.mu_r * dx) / self.xr
        return np.concatenate([dx, dlam, dmu_l, dmu_r])


def solve_kkt(sub: SubQp, z: PrimalDualPoint, rhs: np.ndarray) -> np.ndarray:
    return KktSolver(sub, z).solve(rhs)


def inner_tolerance(outer_tol: float, sub: SubQp) -> float:
    """Residual target for the subproblem solve given the outer tolerance.

    The kernels additionally accept residuals at the rounding level of the
    current iterate; see :attr:`InnerSolveStats.tolerance`.
    """
    floor = 1e3 * EPS * (1.0 + float(np.abs(sub.c_lin).max(initial=0.0)))
    return max(min(0.01 * outer_tol, 1e-9), floor)


def initial_point(sub: SubQp, x: np.ndarray, nu: float) -> PrimalDualPoint:
    """Primal-dual point on the ``nu``-centre associated with a centred ``x``."""
    return PrimalDualPoint(
        x=np.array(x, dtype=float),
        lam=-affine_residual(sub, x) / sub.omega,
        mu_l=nu / (1.0 + x),
        mu_r=nu / (1.0 - x),
    )


def q_hessian(sub: SubQp, x: np.ndarray) -> np.ndarray:
    hess = penalized_hessian(sub)
    hess[np.diag_indices_from(hess)] += barrier_curvature(sub.tau, x)
    return hess


def refine_minimizer(sub: SubQp, x: np.ndarray, max_steps: int = REFINE_STEPS):
    """Newton steps on ``grad q = 0`` from a primal-dual solution.

    The residual of the penalty row is amplified by ``1/omega`` in
    ``grad q``, so a point meeting the residual target can still carry a
    visible gradient. Each step is kept only if it stays interior and
    shrinks ``|grad q|_inf``. Returns ``(x, steps_taken)``.
    """
    x = np.array(x, dtype=float)
    g = q_grad(sub, x)
    gn = float(np.abs(g).max(initial=0.0))
    taken = 0
    for _ in range(max_steps):
        if gn == 0.0:
            break
        try:
            step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(q_hessian(sub, x), lower=True), g)
        except np.linalg.LinAlgError:
            break
        x_new = x - step
        if not in_box(x_new):
            break
        g_new = q_grad(sub, x_new)
        gn_new = float(np.abs(g_new).max(initial=0.0))
        if not gn_new < gn:
            break
        x, g, gn = x_new, g_new, gn_new
        taken += 1
    return x, taken


def solve_subqp(sub: SubQp, inner_tol: float, max_iter: int = DEFAULT_INNER_MAX_ITER,
                backend: Optional[str] = None, refine: bool = True):
    """Minimize ``q`` over the open box.

    With ``refine`` the primal-dual solution is followed by
    :func:`refine_minimizer`; ``z`` is the unrefined primal-dual point.

    Returns ``(x_hat, z, stats)``. Raises :class:`InnerSolveError` (or a
    subclass) on centering failure, factorization failure or when the
    iteration cap is hit.
    """
    if not inner_tol > 0:
        raise ValueError("inner_tol must be positive")
    x, nu = initial_centering(sub)
    z = initial_point(sub, x, nu)
    trace = np.zeros((max_iter, 4))
    name = kernels.DEFAULT_BACKEND if backend is None else backend
    loop = kernels.get_backend(name)
    W = np.ascontiguousarray((sub.A.T @ sub.A) / sub.omega)
    iters, status, res, tol_used = loop(
        sub.Q, W, sub.A, sub.x_ref, sub.g_ref, sub.r_ref,
        float(sub.omega), float(sub.tau),
        z.x, z.lam, z.mu_l, z.mu_r,
        float(inner_tol), int(max_iter), trace,
    )
    stats = InnerSolveStats(
        centering_nu=nu,
        pd_iterations=int(iters),
        final_residual=float(res),
        trace=trace[:iters].copy(),
        tolerance=float(tol_used),
        backend=name,
    )
    if status == kernels.FACTORIZATION_FAILED:
        stats.status = "kkt_failure"
        raise KktError("Schur complement factorization failed", stats)
    if status == kernels.MAX_ITER:
        stats.status = "max_iter"
        raise InnerIterationLimit(f"no convergence in {max_iter} iterations (residual {res:.3e})", stats)
    x_hat = z.x.copy()
    if refine:
        x_hat, stats.refine_steps = refine_minimizer(sub, x_hat)
    return x_hat, z, stats
