"""Pure-Python predictor-corrector loop (fallback for the compiled core).

Both backends share one calling convention; see :func:`pd_loop`.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

CONVERGED = 0
MAX_ITER = 1
FACTORIZATION_FAILED = 2

STEP_FRACTION = 0.99

# Residuals below this many ulps of the summed term magnitudes are rounding noise.
ROUNDING_FACTOR = 10.0
_EPS = float(np.finfo(float).eps)


def residual(Q, A, x_ref, g_ref, r_ref, omega, nu, x, lam, mu_l, mu_r):
    """Stacked ``F_nu(z)`` with the affine rows evaluated relative to ``x_ref``."""
    d = x - x_ref
    r1 = Q @ d + g_ref - A.T @ lam - mu_l + mu_r
    r2 = A @ d + r_ref + omega * lam
    r3 = mu_l * (1.0 + x) - nu
    r4 = mu_r * (1.0 - x) - nu
    return r1, r2, r3, r4


def residual_scale(absQ, absA, x_ref, g_ref, r_ref, omega, nu, x, lam, mu_l, mu_r):
    """Largest row-wise sum of absolute terms entering ``F_nu(z)``."""
    d = np.abs(x - x_ref)
    s1 = absQ @ d + np.abs(g_ref) + absA.T @ np.abs(lam) + mu_l + mu_r
    s2 = absA @ d + np.abs(r_ref) + omega * np.abs(lam)
    s3 = mu_l * (1.0 + x) + nu
    s4 = mu_r * (1.0 - x) + nu
    return max(s1.max(initial=0.0), s2.max(initial=0.0), s3.max(initial=0.0), s4.max(initial=0.0))


def duality_measure(x, mu_l, mu_r):
    # mean complementarity over the 2n barrier pairs
    return float(mu_l @ (1.0 + x) + mu_r @ (1.0 - x)) / (2 * x.size)


def max_step(x, mu_l, mu_r, dx, dmu_l, dmu_r):
    """Largest alpha in (0, 1] keeping ``z + alpha dz`` in the closed feasible set."""
    alpha = 1.0
    neg = dx < 0
    if neg.any():
        alpha = min(alpha, float(np.min((1.0 + x[neg]) / -dx[neg])))
    pos = dx > 0
    if pos.any():
        alpha = min(alpha, float(np.min((1.0 - x[pos]) / dx[pos])))
    neg = dmu_l < 0
    if neg.any():
        alpha = min(alpha, float(np.min(mu_l[neg] / -dmu_l[neg])))
    neg = dmu_r < 0
    if neg.any():
        alpha = min(alpha, float(np.min(mu_r[neg] / -dmu_r[neg])))
    return alpha


def pd_loop(Q, W, A, x_ref, g_ref, r_ref, omega, tau, x, lam, mu_l, mu_r, tol, max_iter, trace):
    """Mehrotra predictor-corrector iteration towards a root of ``F_tau``.

    ``W`` is ``A^T A / omega``. ``x``, ``lam``, ``mu_l``, ``mu_r`` are updated in
    place; ``trace`` is a ``(max_iter, 4)`` array receiving ``(nu, alpha,
    residual, nu_hat)`` per iteration.

    The loop stops once the residual is at most ``tol`` or at most
    ``ROUNDING_FACTOR * eps`` times :func:`residual_scale`, whichever is
    larger. Returns ``(iterations, status, final_residual, tolerance_used)``.
    """
    if trace.shape[0] < max_iter or trace.shape[1] < 4:
        raise ValueError("trace must have shape (max_iter, 4)")
    base = Q + W
    absQ = np.abs(Q)
    absA = np.abs(A)
    it = 0
    while True:
        r1, r2, r3, r4 = residual(Q, A, x_ref, g_ref, r_ref, omega, tau, x, lam, mu_l, mu_r)
        res = max(np.abs(r1).max(initial=0.0), np.abs(r2).max(initial=0.0),
                  np.abs(r3).max(initial=0.0), np.abs(r4).max(initial=0.0))
        scale = residual_scale(absQ, absA, x_ref, g_ref, r_ref, omega, tau, x, lam, mu_l, mu_r)
        tol_used = max(tol, ROUNDING_FACTOR * _EPS * scale)
        if res <= tol_used:
            return it, CONVERGED, res, tol_used
        if it >= max_iter:
            return it, MAX_ITER, res, tol_used

        nu = duality_measure(x, mu_l, mu_r)
        xl = 1.0 + x
        xr = 1.0 - x
        sigma_mat = base.copy()
        sigma_mat[np.diag_indices_from(sigma_mat)] += mu_l / xl + mu_r / xr
        try:
            factor = scipy.linalg.cho_factor(sigma_mat, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            return it, FACTORIZATION_FAILED, res, tol_used
        diag = np.diag(factor[0])
        if not np.all((diag > 0) & (diag < np.inf)):
            return it, FACTORIZATION_FAILED, res, tol_used

        def solve(s1, s2, s3, s4):
            rhs = s1 + A.T @ (s2 / omega) + s3 / xl - s4 / xr
            dx = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
            dlam = (s2 - A @ dx) / omega
            dmu_l = (s3 - mu_l * dx) / xl
            dmu_r = (s4 + mu_r * dx) / xr
            return dx, dlam, dmu_l, dmu_r

        # predictor: affine step towards nu = tau
        dx_a, dlam_a, dml_a, dmr_a = solve(-r1, -r2, -r3, -r4)
        alpha_aff = max_step(x, mu_l, mu_r, dx_a, dml_a, dmr_a)
        x_a = x + alpha_aff * dx_a
        lam_a = lam + alpha_aff * dlam_a
        ml_a = mu_l + alpha_aff * dml_a
        mr_a = mu_r + alpha_aff * dmr_a
        nu_aff = duality_measure(x_a, ml_a, mr_a)
        sigma = (nu_aff / nu) ** 3
        nu_hat = max(tau, sigma * nu)

        # corrector: Newton step for F_nu_hat evaluated at the affine point
        c1, c2, c3, c4 = residual(Q, A, x_ref, g_ref, r_ref, omega, nu_hat, x_a, lam_a, ml_a, mr_a)
        dx_c, dlam_c, dml_c, dmr_c = solve(-c1, -c2, -c3, -c4)
        dx = dx_a + dx_c
        dlam = dlam_a + dlam_c
        dml = dml_a + dml_c
        dmr = dmr_a + dmr_c
        alpha = max_step(x, mu_l, mu_r, dx, dml, dmr)
        step = STEP_FRACTION * alpha
        x += step * dx
        lam += step * dlam
        mu_l += step * dml
        mu_r += step * dmr
        trace[it, 0] = nu
        trace[it, 1] = alpha
        trace[it, 2] = res
        trace[it, 3] = nu_hat
        it += 1
