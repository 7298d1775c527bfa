from decimal import Decimal, getcontext
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_interior
from penbar import (
    NlpProblem,
    PenaltyBarrier,
    PenaltyParams,
    eval_grad_phi,
    eval_hess_phi,
    eval_lambda,
    eval_phi,
    kkt_residual,
    registry_get,
    solve,
)
from penbar.merit import DomainError
from penbar.problem import central_difference, relative_error


def zero_problem(n):
    return NlpProblem(n, 0, lambda x: 0.0, lambda x: np.zeros(0), lambda x: np.zeros(n),
                      lambda x: np.zeros((n, 0)), lambda x, lam: np.zeros((n, n)))


def test_phi_zero_at_origin():
    assert eval_phi(zero_problem(3), PenaltyParams(), np.zeros(3)) == 0.0


def test_phi_linear_rate_closed_form():
    getcontext().prec = 40
    rho, tau = Decimal("1e-7"), Decimal("1e-8")
    x = Decimal("0.5")
    expected = -x * x / 2 + rho / 2 * x * x - tau * (Decimal("1.5").ln() + Decimal("0.5").ln())
    params = PenaltyParams(rho=1e-7, tau=1e-8)
    got = eval_phi(registry_get("linear_rate_example"), params, np.array([0.5]))
    assert got == pytest.approx(float(expected), rel=1e-15)


def test_phi_circle_penalty_term_at_origin():
    params = PenaltyParams()
    r = 0.5
    assert eval_phi(registry_get("circle_equality"), params, np.zeros(2)) == pytest.approx(r**4 / (2 * params.omega),
                                                                                          rel=1e-15)


def test_grad_zero_problem_origin():
    np.testing.assert_array_equal(eval_grad_phi(zero_problem(2), PenaltyParams(), np.zeros(2)), np.zeros(2))


def test_grad_box_lp_origin():
    params = PenaltyParams(rho=1e-12)
    assert eval_grad_phi(registry_get("box_lp"), params, np.zeros(1))[0] == pytest.approx(1.0, abs=1e-12)


def test_hess_zero_problem_origin():
    params = PenaltyParams(tau=1e-8)
    H = eval_hess_phi(zero_problem(3), params, np.zeros(3))
    np.testing.assert_allclose(H, (2 * params.tau + params.rho) * np.eye(3), rtol=1e-15)


def test_hess_convex_qp_decomposition():
    p = registry_get("convex_qp_3")
    params = PenaltyParams()
    x = np.array([0.1, -0.2, 0.3])
    H = eval_hess_phi(p, params, x)
    barrier = params.tau * (1 / (1 + x) ** 2 + 1 / (1 - x) ** 2)
    G, A = p.meta["G"], p.meta["A"]
    expected = G + A.T @ A / params.omega
    np.testing.assert_allclose(H - params.rho * np.eye(3) - np.diag(barrier), expected, rtol=1e-12)


def test_lambda_examples():
    p = registry_get("circle_equality")
    params = PenaltyParams(omega=1e-6)
    np.testing.assert_allclose(eval_lambda(p, params, np.zeros(2)), [0.25 / 1e-6], rtol=1e-15)
    on_circle = np.array([0.3, 0.4])
    assert abs(eval_lambda(p, params, on_circle)[0]) <= 1e-10 / 1e-6

    q = NlpProblem(1, 1, lambda x: 0.0, lambda x: np.array([1e-6]), lambda x: np.zeros(1),
                   lambda x: np.zeros((1, 1)), lambda x, lam: np.zeros((1, 1)))
    np.testing.assert_allclose(eval_lambda(q, params, np.zeros(1)), [-1.0], rtol=1e-15)


def test_grad_matches_fd(problem_name, rng):
    p = registry_get(problem_name)
    params = PenaltyParams()
    merit = PenaltyBarrier(p, params)
    for _ in range(10):
        x = random_interior(rng, p.n)
        assert relative_error(merit.grad(x), central_difference(merit.phi, x)) <= 1e-5


def test_hess_matches_fd(problem_name, rng):
    p = registry_get(problem_name)
    params = PenaltyParams()
    merit = PenaltyBarrier(p, params)
    for _ in range(10):
        x = random_interior(rng, p.n)
        assert relative_error(merit.hess(x), central_difference(merit.grad, x)) <= 1e-4


def test_domain_error_on_boundary(problem_name):
    p = registry_get(problem_name)
    merit = PenaltyBarrier(p, PenaltyParams())
    x = np.zeros(p.n)
    x[0] = 1.0
    for fn in (merit.phi, merit.grad, merit.hess):
        with pytest.raises(DomainError):
            fn(x)
    assert merit.phi_or_inf(x) == np.inf
    assert merit.phi_or_inf(np.full(p.n, np.nan)) == np.inf


# The log barrier only grows like tau * log(1 / distance); with tau = 1e-7 it is
# invisible within double precision, so the blow-up is checked at unit weights.
BLOWUP = PenaltyParams(omega=1.0, tau=1.0)


def test_barrier_blow_up_exceeds_origin(problem_name):
    p = registry_get(problem_name)
    merit = PenaltyBarrier(p, BLOWUP)
    for sign in (1.0, -1.0):
        x = np.full(p.n, sign * (1 - 1e-12))
        value = merit.phi(x)
        assert np.isfinite(value) and value > merit.phi(np.zeros(p.n))


def test_phi_eventually_increasing_along_rays(problem_name, rng):
    p = registry_get(problem_name)
    merit = PenaltyBarrier(p, BLOWUP)
    for _ in range(5):
        d = rng.standard_normal(p.n)
        d /= np.abs(d).max()
        ts = 1 - 10.0 ** -np.arange(4, 13)
        values = [merit.phi(t * d) for t in ts]
        assert np.all(np.diff(values) > 0)


def test_phi_diff_matches_plain_difference(problem_name, rng):
    p = registry_get(problem_name)
    merit = PenaltyBarrier(p, PenaltyParams())
    for _ in range(5):
        x = random_interior(rng, p.n, margin=0.2)
        y = x + rng.uniform(-0.1, 0.1, p.n)
        plain = merit.phi(y) - merit.phi(x)
        assert merit.phi_diff(y, x) == pytest.approx(plain, rel=1e-8, abs=1e-9 * (1 + abs(merit.phi(x))))


def test_phi_diff_sign_for_tiny_descent_step():
    p = registry_get("convex_qp_3")
    merit = PenaltyBarrier(p, PenaltyParams())
    x = np.array([0.1, -0.2, 0.3])
    g = merit.grad(x)
    y = x - 1e-14 * g / np.abs(g).max()
    assert merit.phi_diff(y, x) < 0


def test_phi_diff_outside_box():
    merit = PenaltyBarrier(registry_get("box_lp"), PenaltyParams())
    assert merit.phi_diff(np.array([1.5]), np.array([0.0])) == np.inf


def test_kkt_residual_examples():
    params = PenaltyParams(tau=1e-8)
    p = zero_problem(2)
    z = SimpleNamespace(x=np.zeros(2), lam=np.zeros(0), mu_l=np.full(2, params.tau), mu_r=np.full(2, params.tau))
    assert kkt_residual(p, params, z) == 0.0
    delta = 1e-3
    z.mu_l = z.mu_l + np.array([delta, 0.0])
    assert kkt_residual(p, params, z) == pytest.approx(delta, rel=1e-12)


def test_kkt_residual_at_solution():
    p = registry_get("circle_equality")
    params = PenaltyParams()
    report = solve(p)
    x = report.x_final
    z = SimpleNamespace(x=x, lam=-p.c(x) / params.omega, mu_l=params.tau / (1 + x), mu_r=params.tau / (1 - x))
    assert kkt_residual(p, params, z) <= 10 * params.tol


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.95, 0.95), st.floats(1e-9, 1e-3))
def test_evaluate_bundle_consistent(x0, tau):
    p = registry_get("linear_rate_example")
    merit = PenaltyBarrier(p, PenaltyParams(tau=tau))
    ev = merit.evaluate(np.array([x0]), hessian=True)
    assert ev.phi == merit.phi(ev.x)
    np.testing.assert_array_equal(ev.grad_phi, merit.grad(ev.x))
    np.testing.assert_array_equal(ev.hess_phi, merit.hess(ev.x))
    assert ev.lam.size == 0
