# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled predictor-corrector loop.

Same calling convention and arithmetic as ``penbar._pd_py.pd_loop``; the
Schur complement is factored with LAPACK ``dpotrf`` once per iteration and
reused for the predictor and corrector solves.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs

cnp.import_array()

cdef enum:
    CONVERGED = 0
    MAX_ITER = 1
    FACTORIZATION_FAILED = 2

cdef double STEP_FRACTION = 0.99
cdef double ROUNDING_FACTOR = 10.0
cdef double EPS = 2.220446049250313e-16


cdef void _residual(const double[:, ::1] Q, const double[:, ::1] A,
                    const double[::1] x_ref, const double[::1] g_ref, const double[::1] r_ref,
                    double omega, double nu,
                    const double[::1] x, const double[::1] lam,
                    const double[::1] mu_l, const double[::1] mu_r,
                    double[::1] d, double[::1] r1, double[::1] r2,
                    double[::1] r3, double[::1] r4) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = lam.shape[0]
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(n):
        d[i] = x[i] - x_ref[i]
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += Q[i, j] * d[j]
        r1[i] = s + g_ref[i]
    for j in range(m):
        s = 0.0
        for i in range(n):
            s += A[j, i] * d[i]
        r2[j] = s + r_ref[j] + omega * lam[j]
        for i in range(n):
            r1[i] -= A[j, i] * lam[j]
    for i in range(n):
        r1[i] += -mu_l[i] + mu_r[i]
        r3[i] = mu_l[i] * (1.0 + x[i]) - nu
        r4[i] = mu_r[i] * (1.0 - x[i]) - nu


cdef double _residual_scale(const double[:, ::1] Q, const double[:, ::1] A,
                           const double[::1] x_ref, const double[::1] g_ref,
                           const double[::1] r_ref, double omega, double nu,
                           const double[::1] x, const double[::1] lam,
                           const double[::1] mu_l, const double[::1] mu_r,
                           double[::1] s1) noexcept nogil:
    """Largest row-wise sum of absolute terms entering the residual."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = lam.shape[0]
    cdef Py_ssize_t i, j
    cdef double s, out = 0.0
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += fabs(Q[i, j]) * fabs(x[j] - x_ref[j])
        s1[i] = s + fabs(g_ref[i]) + mu_l[i] + mu_r[i]
    for j in range(m):
        s = 0.0
        for i in range(n):
            s += fabs(A[j, i]) * fabs(x[i] - x_ref[i])
            s1[i] += fabs(A[j, i]) * fabs(lam[j])
        s += fabs(r_ref[j]) + omega * fabs(lam[j])
        if s > out:
            out = s
    for i in range(n):
        if s1[i] > out:
            out = s1[i]
        s = mu_l[i] * (1.0 + x[i]) + nu
        if s > out:
            out = s
        s = mu_r[i] * (1.0 - x[i]) + nu
        if s > out:
            out = s
    return out


cdef double _inf_norm(const double[::1] v) noexcept nogil:
    cdef double out = 0.0
    cdef Py_ssize_t i
    for i in range(v.shape[0]):
        if fabs(v[i]) > out:
            out = fabs(v[i])
    return out


cdef double _duality_measure(const double[::1] x, const double[::1] mu_l,
                             const double[::1] mu_r) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += mu_l[i] * (1.0 + x[i])
    cdef double t = 0.0
    for i in range(n):
        t += mu_r[i] * (1.0 - x[i])
    return (s + t) / (2 * n)


cdef double _max_step(const double[::1] x, const double[::1] mu_l, const double[::1] mu_r,
                      const double[::1] dx, const double[::1] dmu_l,
                      const double[::1] dmu_r) noexcept nogil:
    cdef double alpha = 1.0
    cdef double a
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        if dx[i] < 0:
            a = (1.0 + x[i]) / -dx[i]
            if a < alpha:
                alpha = a
        elif dx[i] > 0:
            a = (1.0 - x[i]) / dx[i]
            if a < alpha:
                alpha = a
        if dmu_l[i] < 0:
            a = mu_l[i] / -dmu_l[i]
            if a < alpha:
                alpha = a
        if dmu_r[i] < 0:
            a = mu_r[i] / -dmu_r[i]
            if a < alpha:
                alpha = a
    return alpha


cdef int _solve(double[::1, :] L, const double[:, ::1] A, double omega,
                const double[::1] x, const double[::1] mu_l, const double[::1] mu_r,
                const double[::1] s1, const double[::1] s2,
                const double[::1] s3, const double[::1] s4,
                double[::1] dx, double[::1] dlam, double[::1] dmu_l,
                double[::1] dmu_r) noexcept nogil:
    """Back-substitution through the reduced system; ``s*`` is the right-hand side."""
    cdef int n = <int>x.shape[0]
    cdef Py_ssize_t m = s2.shape[0]
    cdef Py_ssize_t i, j
    cdef double s
    cdef int nrhs = 1, info = 0
    cdef char uplo = b'L'
    for i in range(n):
        dx[i] = s1[i] + s3[i] / (1.0 + x[i]) - s4[i] / (1.0 - x[i])
    for j in range(m):
        s = s2[j] / omega
        for i in range(n):
            dx[i] += A[j, i] * s
    dpotrs(&uplo, &n, &nrhs, &L[0, 0], &n, &dx[0], &n, &info)
    if info != 0:
        return info
    for j in range(m):
        s = 0.0
        for i in range(n):
            s += A[j, i] * dx[i]
        dlam[j] = (s2[j] - s) / omega
    for i in range(n):
        dmu_l[i] = (s3[i] - mu_l[i] * dx[i]) / (1.0 + x[i])
        dmu_r[i] = (s4[i] + mu_r[i] * dx[i]) / (1.0 - x[i])
    return 0


def pd_loop(const double[:, ::1] Q, const double[:, ::1] W, const double[:, ::1] A,
            const double[::1] x_ref, const double[::1] g_ref, const double[::1] r_ref,
            double omega, double tau,
            double[::1] x, double[::1] lam, double[::1] mu_l, double[::1] mu_r,
            double tol, int max_iter, double[:, ::1] trace):
    """Mehrotra predictor-corrector iteration towards a root of ``F_tau``.

    See ``penbar._pd_py.pd_loop`` for the contract, including the rounding
    allowance on ``tol``.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = lam.shape[0]
    cdef int ni = <int>n
    cdef int info = 0
    cdef char uplo = b'L'
    cdef Py_ssize_t i, j
    cdef int it = 0
    cdef int status = -1
    cdef double res = 0.0
    cdef double tol_used = tol
    cdef double nu, nu_aff, nu_hat, sigma, alpha_aff, alpha, step
    if trace.shape[0] < max_iter or trace.shape[1] < 4:
        raise ValueError("trace must have shape (max_iter, 4)")

    cdef double[::1, :] L = np.empty((n, n), dtype=np.float64, order="F")
    cdef double[::1] d = np.empty(n)
    cdef double[::1] r1 = np.empty(n)
    cdef double[::1] r2 = np.empty(m)
    cdef double[::1] r3 = np.empty(n)
    cdef double[::1] r4 = np.empty(n)
    cdef double[::1] dx_a = np.empty(n)
    cdef double[::1] dlam_a = np.empty(m)
    cdef double[::1] dml_a = np.empty(n)
    cdef double[::1] dmr_a = np.empty(n)
    cdef double[::1] dx_c = np.empty(n)
    cdef double[::1] dlam_c = np.empty(m)
    cdef double[::1] dml_c = np.empty(n)
    cdef double[::1] dmr_c = np.empty(n)
    cdef double[::1] x_a = np.empty(n)
    cdef double[::1] lam_a = np.empty(m)
    cdef double[::1] ml_a = np.empty(n)
    cdef double[::1] mr_a = np.empty(n)

    with nogil:
        while True:
            _residual(Q, A, x_ref, g_ref, r_ref, omega, tau, x, lam, mu_l, mu_r,
                      d, r1, r2, r3, r4)
            res = _inf_norm(r1)
            if m > 0 and _inf_norm(r2) > res:
                res = _inf_norm(r2)
            if _inf_norm(r3) > res:
                res = _inf_norm(r3)
            if _inf_norm(r4) > res:
                res = _inf_norm(r4)
            tol_used = ROUNDING_FACTOR * EPS * _residual_scale(
                Q, A, x_ref, g_ref, r_ref, omega, tau, x, lam, mu_l, mu_r, d)
            if tol_used < tol:
                tol_used = tol
            if res <= tol_used:
                status = CONVERGED
                break
            if it >= max_iter:
                status = MAX_ITER
                break

            nu = _duality_measure(x, mu_l, mu_r)
            for j in range(n):
                for i in range(n):
                    L[i, j] = Q[i, j] + W[i, j]
            for i in range(n):
                L[i, i] += mu_l[i] / (1.0 + x[i]) + mu_r[i] / (1.0 - x[i])
            dpotrf(&uplo, &ni, &L[0, 0], &ni, &info)
            for i in range(n):
                if not (L[i, i] > 0.0 and L[i, i] < INFINITY):
                    info = -1
            if info != 0:
                status = FACTORIZATION_FAILED
                break

            # predictor: affine step towards nu = tau
            for i in range(n):
                r1[i] = -r1[i]
                r3[i] = -r3[i]
                r4[i] = -r4[i]
            for j in range(m):
                r2[j] = -r2[j]
            if _solve(L, A, omega, x, mu_l, mu_r, r1, r2, r3, r4,
                      dx_a, dlam_a, dml_a, dmr_a) != 0:
                status = FACTORIZATION_FAILED
                break
            alpha_aff = _max_step(x, mu_l, mu_r, dx_a, dml_a, dmr_a)
            for i in range(n):
                x_a[i] = x[i] + alpha_aff * dx_a[i]
                ml_a[i] = mu_l[i] + alpha_aff * dml_a[i]
                mr_a[i] = mu_r[i] + alpha_aff * dmr_a[i]
            for j in range(m):
                lam_a[j] = lam[j] + alpha_aff * dlam_a[j]
            nu_aff = _duality_measure(x_a, ml_a, mr_a)
            sigma = (nu_aff / nu) * (nu_aff / nu) * (nu_aff / nu)
            nu_hat = sigma * nu
            if nu_hat < tau:
                nu_hat = tau

            # corrector: Newton step for F_nu_hat evaluated at the affine point
            _residual(Q, A, x_ref, g_ref, r_ref, omega, nu_hat, x_a, lam_a, ml_a, mr_a,
                      d, r1, r2, r3, r4)
            for i in range(n):
                r1[i] = -r1[i]
                r3[i] = -r3[i]
                r4[i] = -r4[i]
            for j in range(m):
                r2[j] = -r2[j]
            if _solve(L, A, omega, x, mu_l, mu_r, r1, r2, r3, r4,
                      dx_c, dlam_c, dml_c, dmr_c) != 0:
                status = FACTORIZATION_FAILED
                break
            for i in range(n):
                dx_c[i] += dx_a[i]
                dml_c[i] += dml_a[i]
                dmr_c[i] += dmr_a[i]
            for j in range(m):
                dlam_c[j] += dlam_a[j]
            alpha = _max_step(x, mu_l, mu_r, dx_c, dml_c, dmr_c)
            step = STEP_FRACTION * alpha
            for i in range(n):
                x[i] += step * dx_c[i]
                mu_l[i] += step * dml_c[i]
                mu_r[i] += step * dmr_c[i]
            for j in range(m):
                lam[j] += step * dlam_c[j]
            trace[it, 0] = nu
            trace[it, 1] = alpha
            trace[it, 2] = res
            trace[it, 3] = nu_hat
            it += 1

    return it, status, res, tol_used
