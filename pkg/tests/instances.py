"""Instances shared between the unit tests and the acceptance suite."""

import numpy as np

from oracles import random_interior
from penbar import NlpProblem
from penbar.subqp import PrimalDualPoint, SubQp


def random_sub(rng, n=None, m=None, omega=None, tau=None, consistent=True):
    n = int(rng.integers(1, 5)) if n is None else n
    m = int(rng.integers(0, 4)) if m is None else m
    B = rng.standard_normal((n, n))
    A = rng.standard_normal((m, n))
    b = A @ rng.uniform(-0.9, 0.9, n) if consistent else 0.5 * rng.standard_normal(m)
    return SubQp(
        Q=B @ B.T * rng.uniform(0.0, 3.0) + 1e-7 * np.eye(n),
        c_lin=rng.standard_normal(n) * rng.choice([1.0, 10.0]),
        A=A,
        b=b,
        omega=float(rng.choice([1e-7, 1e-3, 1.0])) if omega is None else omega,
        tau=float(rng.choice([1e-8, 1e-7])) if tau is None else tau,
    )


def random_point(rng, sub):
    n, m = sub.n, sub.m
    return PrimalDualPoint(random_interior(rng, n), rng.standard_normal(m),
                           rng.uniform(0.1, 2.0, n), rng.uniform(0.1, 2.0, n))


def drift_problem():
    """f = x1 - x0 with the penalized constraint c = x0.

    Long steps in +x0 lower f while the penalty makes phi rise; the x1
    component keeps a descent direction at every checkpoint.
    """
    return NlpProblem(
        n=2,
        m=1,
        eval_f=lambda x: float(x[1] - x[0]),
        eval_c=lambda x: np.array([x[0]]),
        eval_grad_f=lambda x: np.array([-1.0, 1.0]),
        eval_jac_c=lambda x: np.array([[1.0], [0.0]]),
        eval_hess_lag=lambda x, lam: np.zeros((2, 2)),
        name="drift",
    )
