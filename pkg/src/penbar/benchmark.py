"""Timing of the predictor-corrector kernels on random subproblems."""

from __future__ import annotations

import time
from typing import List, Sequence

import numpy as np

from . import kernels
from .subqp import SubQp, inner_tolerance, solve_subqp


def random_subqp(n: int, rng: np.random.Generator, omega: float = 1e-7, tau: float = 1e-7) -> SubQp:
    m = max(1, n // 2)
    B = rng.standard_normal((n, n))
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    return SubQp(
        Q=B.T @ B / n + 1e-3 * np.eye(n),
        c_lin=rng.standard_normal(n),
        A=A,
        b=A @ rng.uniform(-0.5, 0.5, n),
        omega=omega,
        tau=tau,
    )


def time_backend(sub: SubQp, backend: str, repeats: int) -> tuple:
    """Best wall time over ``repeats`` solves, in milliseconds, and the iteration count."""
    tol = inner_tolerance(1e-8, sub)
    best = np.inf
    iters = 0
    for _ in range(repeats):
        t0 = time.perf_counter()
        _, _, stats = solve_subqp(sub, tol, backend=backend, refine=False)
        best = min(best, time.perf_counter() - t0)
        iters = stats.pd_iterations
    return 1e3 * best, iters


def compare_backends(sizes: Sequence[int], repeats: int = 5, seed: int = 0) -> List[dict]:
    """One row per (size, backend); ``speedup`` is relative to the pure-Python kernel."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        sub = random_subqp(int(n), rng)
        base_ms, base_it = time_backend(sub, "python", repeats)
        rows.append({"n": int(n), "backend": "python", "iterations": base_it, "ms": base_ms, "speedup": None})
        if "compiled" in kernels.available_backends():
            ms, it = time_backend(sub, "compiled", repeats)
            rows.append({"n": int(n), "backend": "compiled", "iterations": it, "ms": ms,
                         "speedup": base_ms / ms})
    return rows
