"""Convexification of the penalized Lagrangian Hessian.

Given ``H`` and the constraint gradients ``J`` (columns), find ``H_tilde``
close to ``H`` such that ``M_tilde = H_tilde + J J^T / omega`` is positive
semidefinite. The default strategy clips the negative spectrum of ``M``,
which is the Frobenius-nearest PSD matrix to ``M``.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

# Relative tolerance under which M counts as PSD already.
PSD_RTOL = 1e-10

# Above this size the shift strategy estimates lambda_min iteratively.
_DENSE_EIG_LIMIT = 2000


@dataclasses.dataclass(frozen=True)
class PsdHessian:
    """Result of :func:`project_psd`.

    Attributes:
      h_tilde: Symmetric replacement for the Lagrangian Hessian.
      m_tilde_min_eig: Smallest eigenvalue of ``M_tilde`` as computed.
      used_exact: True iff ``h_tilde`` is the input ``H`` unchanged.
    """

    h_tilde: np.ndarray
    m_tilde_min_eig: float
    used_exact: bool


def penalized_curvature(H: np.ndarray, jac_c: np.ndarray, omega: float) -> np.ndarray:
    M = H + (jac_c @ jac_c.T) / omega
    return 0.5 * (M + M.T)


def psd_threshold(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return -PSD_RTOL * (1.0 + np.linalg.norm(M, 2))


def _min_eig(M: np.ndarray) -> float:
    n = M.shape[0]
    if n <= _DENSE_EIG_LIMIT:
        return float(scipy.linalg.eigvalsh(M, subset_by_index=[0, 0])[0])
    return float(scipy.sparse.linalg.eigsh(M, k=1, which="SA", return_eigenvectors=False)[0])


def project_psd(H: np.ndarray, jac_c: np.ndarray, omega: float, strategy: str = "clip") -> PsdHessian:
    """Return ``H_tilde`` with ``H_tilde + J J^T / omega`` positive semidefinite.

    Args:
      H: Symmetric (n, n) Lagrangian Hessian.
      jac_c: (n, m) constraint gradients as columns.
      omega: Penalty parameter.
      strategy: ``"clip"`` (eigenvalue clipping of M, dense) or ``"shift"``
        (``H + delta I`` with ``delta = -lambda_min(M)``).

    Raises:
      numpy.linalg.LinAlgError: if the eigendecomposition fails.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    if n == 0:
        return PsdHessian(H.copy(), 0.0, True)
    jac_c = np.asarray(jac_c, dtype=float).reshape(n, -1)
    M = penalized_curvature(H, jac_c, omega)

    if strategy == "clip":
        evals, evecs = scipy.linalg.eigh(M)
        lo = float(evals[0])
        if lo >= psd_threshold(M):
            return PsdHessian(H.copy(), lo, True)
        clipped = np.maximum(evals, 0.0)
        M_tilde = (evecs * clipped) @ evecs.T
        h_tilde = M_tilde - (jac_c @ jac_c.T) / omega
        h_tilde = 0.5 * (h_tilde + h_tilde.T)
        return PsdHessian(h_tilde, float(clipped.min()), False)

    if strategy == "shift":
        lo = _min_eig(M)
        if lo >= psd_threshold(M):
            return PsdHessian(H.copy(), lo, True)
        # small relative slack so rounding in the shift cannot leave M_tilde indefinite
        delta = -lo * (1.0 + 1e-12) + np.finfo(float).eps * (1.0 + abs(lo))
        return PsdHessian(H + delta * np.eye(n), lo + delta, False)

    raise ValueError(f"unknown strategy {strategy!r}; expected 'clip' or 'shift'")
