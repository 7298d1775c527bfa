"""Built-in desk-scale test problems.

Every problem lives in the unit box and ships analytic first and second
derivatives. ``registry_get`` builds a fresh instance on each call; seeded
problems are deterministic in ``seed``.
"""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np

from .problem import NlpProblem, accurate_affine

CONVEX_QP_SIZES = (3, 5, 10, 20)
DEFAULT_SEED = 42


class UnknownProblemError(LookupError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown problem {name!r}; available: {', '.join(available_problems())}")


def linear_rate_example() -> NlpProblem:
    """f(x) = -x^2/2 on [-1, 1]: the PSD projection of its Hessian is 0."""
    return NlpProblem(
        n=1,
        m=0,
        eval_f=lambda x: -0.5 * x[0] ** 2,
        eval_c=lambda x: np.zeros(0),
        eval_grad_f=lambda x: np.array([-x[0]]),
        eval_jac_c=lambda x: np.zeros((1, 0)),
        eval_hess_lag=lambda x, lam: np.array([[-1.0]]),
        name="linear_rate_example",
        x0=np.array([0.5]),
    )


def box_lp() -> NlpProblem:
    return NlpProblem(
        n=1,
        m=0,
        eval_f=lambda x: float(x[0]),
        eval_c=lambda x: np.zeros(0),
        eval_grad_f=lambda x: np.array([1.0]),
        eval_jac_c=lambda x: np.zeros((1, 0)),
        eval_hess_lag=lambda x, lam: np.zeros((1, 1)),
        name="box_lp",
        x0=np.array([0.0]),
    )


def convex_qp(n: int, seed: int = DEFAULT_SEED) -> NlpProblem:
    """Strictly convex QP with ``max(1, n // 2)`` consistent linear equalities.

    Constraint rows have unit length and the unconstrained minimizer lies in
    ``[-0.5, 0.5]^n``, which keeps the merit function well scaled at the
    default penalty parameters.
    """
    rng = np.random.default_rng([seed, n])
    m = max(1, n // 2)
    B = rng.standard_normal((n, n))
    G = B.T @ B / n + 0.5 * np.eye(n)
    g = -G @ rng.uniform(-0.5, 0.5, n)
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    x_feas = rng.uniform(-0.5, 0.5, n)
    b = A @ x_feas
    G.setflags(write=False)
    A.setflags(write=False)

    return NlpProblem(
        n=n,
        m=m,
        eval_f=lambda x: float(0.5 * x @ G @ x + g @ x),
        eval_c=lambda x: accurate_affine(A, x, b),
        eval_grad_f=lambda x: G @ x + g,
        eval_jac_c=lambda x: A.T.copy(),
        eval_hess_lag=lambda x, lam: G.copy(),
        name=f"convex_qp_{n}",
        x0=np.zeros(n),
        meta={"G": G, "g": g, "A": A, "b": b},
    )


def circle_equality(r: float = 0.5) -> NlpProblem:
    """Indefinite bilinear objective on the circle |x| = r."""

    def f(x):
        return float(-x[0] * x[1] + 0.3 * x[0])

    def grad_f(x):
        return np.array([-x[1] + 0.3, -x[0]])

    def c(x):
        return np.array([x[0] ** 2 + x[1] ** 2 - r**2])

    def jac(x):
        return np.array([[2 * x[0]], [2 * x[1]]])

    def hess_lag(x, lam):
        return np.array([[0.0, -1.0], [-1.0, 0.0]]) - 2.0 * lam[0] * np.eye(2)

    return NlpProblem(
        n=2,
        m=1,
        eval_f=f,
        eval_c=c,
        eval_grad_f=grad_f,
        eval_jac_c=jac,
        eval_hess_lag=hess_lag,
        name="circle_equality",
        x0=np.array([0.1, 0.2]),
        meta={"r": r},
    )


def overdetermined() -> NlpProblem:
    """Two independent curves, one listed twice and one scaled (m = 4 > n = 2), consistent.

    The curve Jacobian is nonsingular on the box and the infeasibility
    gradient points inward on every face, so the penalty has no spurious
    minimizers at the boundary.
    """

    def base(x):
        return np.array([x[0] + 0.1 * x[1] ** 2 - 0.3, x[1] - 0.1 * x[0] ** 2 + 0.1])

    def c(x):
        b = base(x)
        return np.array([b[0], b[1], b[0], 2.0 * b[1]])

    def jac(x):
        g1 = np.array([1.0, 0.2 * x[1]])
        g2 = np.array([-0.2 * x[0], 1.0])
        return np.column_stack([g1, g2, g1, 2.0 * g2])

    def hess_lag(x, lam):
        h1 = np.array([[0.0, 0.0], [0.0, 0.2]])
        h2 = np.array([[-0.2, 0.0], [0.0, 0.0]])
        return 2.0 * np.eye(2) - (lam[0] + lam[2]) * h1 - (lam[1] + 2.0 * lam[3]) * h2

    return NlpProblem(
        n=2,
        m=4,
        eval_f=lambda x: float((x[0] - 0.9) ** 2 + (x[1] + 0.5) ** 2),
        eval_c=c,
        eval_grad_f=lambda x: np.array([2 * (x[0] - 0.9), 2 * (x[1] + 0.5)]),
        eval_jac_c=jac,
        eval_hess_lag=hess_lag,
        name="overdetermined",
        x0=np.array([0.0, 0.0]),
    )


def dependent_jac() -> NlpProblem:
    """m = 2 < n = 3 with parallel constraint gradients everywhere."""

    def f(x):
        return float((x[0] - 0.5) ** 2 + (x[1] + 0.3) ** 2 + 0.5 * x[2] ** 2 - 0.4 * x[0] * x[2])

    def grad_f(x):
        return np.array([2 * (x[0] - 0.5) - 0.4 * x[2], 2 * (x[1] + 0.3), x[2] - 0.4 * x[0]])

    def base(x):
        return x[0] + x[1] ** 2 + x[2] - 0.4

    def jac(x):
        g = np.array([1.0, 2 * x[1], 1.0])
        return np.column_stack([g, -2.0 * g])

    def hess_lag(x, lam):
        H = np.array([[2.0, 0.0, -0.4], [0.0, 2.0, 0.0], [-0.4, 0.0, 1.0]])
        H[1, 1] -= 2.0 * (lam[0] - 2.0 * lam[1])
        return H

    return NlpProblem(
        n=3,
        m=2,
        eval_f=f,
        eval_c=lambda x: np.array([base(x), -2.0 * base(x)]),
        eval_grad_f=grad_f,
        eval_jac_c=jac,
        eval_hess_lag=hess_lag,
        name="dependent_jac",
        x0=np.zeros(3),
    )


def hanging_chain(segments: int = 8, length: float = 1.2) -> NlpProblem:
    """Chain of fixed-length links between (-0.5, 0) and (0.5, 0) under gravity.

    Variables are the interior node coordinates ``[x_1..x_{N-1}, y_1..y_{N-1}]``;
    one constraint per link fixes its squared length.
    """
    N = segments
    k = N - 1
    L = length / N
    left = np.array([-0.5, 0.0])
    right = np.array([0.5, 0.0])

    def nodes(z):
        px = np.concatenate([[left[0]], z[:k], [right[0]]])
        py = np.concatenate([[left[1]], z[k:], [right[1]]])
        return px, py

    def c(z):
        px, py = nodes(z)
        return np.diff(px) ** 2 + np.diff(py) ** 2 - L**2

    def jac(z):
        px, py = nodes(z)
        dx, dy = np.diff(px), np.diff(py)
        J = np.zeros((2 * k, N))
        for j in range(N):
            # link j joins node j (start) and node j + 1 (end); nodes 0 and N are fixed
            if j >= 1:
                J[j - 1, j] = -2 * dx[j]
                J[k + j - 1, j] = -2 * dy[j]
            if j + 1 <= k:
                J[j, j] = 2 * dx[j]
                J[k + j, j] = 2 * dy[j]
        return J

    def hess_lag(z, lam):
        # each link contributes 2 * [[1, -1], [-1, 1]] per coordinate
        T = np.zeros((k, k))
        for j in range(N):
            w = 2.0 * lam[j]
            if j >= 1:
                T[j - 1, j - 1] += w
            if j + 1 <= k:
                T[j, j] += w
            if j >= 1 and j + 1 <= k:
                T[j - 1, j] -= w
                T[j, j - 1] -= w
        H = np.zeros((2 * k, 2 * k))
        H[:k, :k] = -T
        H[k:, k:] = -T
        return H

    x0 = np.concatenate([np.linspace(-0.5, 0.5, N + 1)[1:-1], -0.1 * np.ones(k)])
    return NlpProblem(
        n=2 * k,
        m=N,
        eval_f=lambda z: float(np.sum(z[k:])),
        eval_c=c,
        eval_grad_f=lambda z: np.concatenate([np.zeros(k), np.ones(k)]),
        eval_jac_c=jac,
        eval_hess_lag=hess_lag,
        name="hanging_chain",
        x0=x0,
    )


_FIXED: Dict[str, Callable[[], NlpProblem]] = {
    "linear_rate_example": linear_rate_example,
    "box_lp": box_lp,
    "circle_equality": circle_equality,
    "overdetermined": overdetermined,
    "dependent_jac": dependent_jac,
    "hanging_chain": hanging_chain,
}


def available_problems() -> list[str]:
    names = list(_FIXED)
    names[2:2] = [f"convex_qp_{n}" for n in CONVEX_QP_SIZES]
    return names


def registry_get(name: str, seed: int = DEFAULT_SEED) -> NlpProblem:
    """Return a fresh instance of the registered problem ``name``."""
    if name in _FIXED:
        return _FIXED[name]()
    if name.startswith("convex_qp_"):
        suffix = name[len("convex_qp_"):]
        if suffix.isdigit() and int(suffix) > 0:
            return convex_qp(int(suffix), seed)
    raise UnknownProblemError(name)
