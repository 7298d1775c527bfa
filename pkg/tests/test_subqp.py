from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import random_point, random_sub
from oracles import q_gradient_direct, random_interior, residual_F, subqp_minimizer
from penbar import PenaltyBarrier, PenaltyParams, SubQp, assemble_subqp, registry_get, solve_subqp
from penbar.problem import central_difference, relative_error
from penbar.subqp import (
    CenteringError,
    InnerIterationLimit,
    KktError,
    PrimalDualPoint,
    eval_F,
    eval_psi_nu,
    initial_centering,
    initial_point,
    inner_tolerance,
    jacobian_F,
    q_grad,
    q_value,
    refine_minimizer,
    solve_kkt,
)


# assembly


def test_quadratic_data_reproduces_merit_everywhere(rng):
    p = registry_get("convex_qp_5")
    params = PenaltyParams()
    merit = PenaltyBarrier(p, params)
    x_k = random_interior(rng, p.n)
    sub = assemble_subqp(p, params, x_k, p.meta["G"])
    for _ in range(10):
        y = random_interior(rng, p.n)
        assert relative_error(q_grad(sub, y), merit.grad(y)) <= 1e-8


def test_gradient_match_at_assembly_point(problem_name, rng):
    from penbar import project_psd

    p = registry_get(problem_name)
    params = PenaltyParams()
    merit = PenaltyBarrier(p, params)
    for _ in range(5):
        x = random_interior(rng, p.n)
        H = project_psd(p.hess_lag(x, merit.lam(x)), p.jac_c(x), params.omega).h_tilde
        sub = assemble_subqp(p, params, x, H)
        g = merit.grad(x)
        assert np.abs(q_grad(sub, x) - g).max() <= 1e-10 * (1 + np.abs(g).max())


def test_unconstrained_assembly_is_empty():
    p = registry_get("linear_rate_example")
    sub = assemble_subqp(p, PenaltyParams(), np.array([0.5]), np.zeros((1, 1)))
    assert sub.A.shape == (0, 1) and sub.b.shape == (0,)
    assert sub.c_lin[0] == -0.5


def test_assembly_rejects_boundary():
    p = registry_get("box_lp")
    with pytest.raises(ValueError):
        assemble_subqp(p, PenaltyParams(), np.array([1.0]), np.zeros((1, 1)))


def test_reference_point_does_not_change_the_function(rng):
    sub = random_sub(rng, n=3, m=2)
    x_ref = random_interior(rng, 3)
    moved = SubQp(sub.Q, sub.c_lin, sub.A, sub.b, sub.omega, sub.tau, x_ref=x_ref)
    y = random_interior(rng, 3)
    assert q_value(moved, y) == pytest.approx(q_value(sub, y), rel=1e-9)
    np.testing.assert_allclose(q_grad(moved, y), q_grad(sub, y), rtol=1e-8, atol=1e-8)


def test_subqp_validation():
    with pytest.raises(ValueError):
        SubQp(np.ones((2, 3)), np.zeros(2), np.zeros((0, 2)), np.zeros(0), 1.0, 1.0)
    with pytest.raises(ValueError):
        SubQp(np.eye(2), np.zeros(2), np.zeros((0, 2)), np.zeros(0), 0.0, 1.0)


# centering function


def test_psi_derivatives_match_fd(rng):
    for _ in range(10):
        sub = random_sub(rng, omega=1.0)
        nu = 10.0 ** rng.uniform(0, 3)
        x = random_interior(rng, sub.n)
        _, g, H = eval_psi_nu(sub, nu, x)
        assert relative_error(g, central_difference(lambda y: eval_psi_nu(sub, nu, y)[0], x)) <= 1e-5
        assert relative_error(H, central_difference(lambda y: eval_psi_nu(sub, nu, y)[1], x)) <= 1e-5


def test_psi_gradient_vanishes_at_origin_as_nu_grows(rng):
    sub = random_sub(rng, n=3, m=1)
    norms = [np.linalg.norm(eval_psi_nu(sub, nu, np.zeros(3))[1]) for nu in 10.0 ** np.arange(0, 26, 2)]
    assert np.all(np.diff(norms) < 0) and norms[-1] < 1e-8


def test_psi_domain():
    sub = SubQp(np.eye(1), np.zeros(1), np.zeros((0, 1)), np.zeros(0), 1.0, 1e-8)
    with pytest.raises(ValueError):
        eval_psi_nu(sub, 1.0, np.array([1.0]))


def test_centering_origin_is_center():
    sub = SubQp(np.eye(2), np.zeros(2), np.zeros((0, 2)), np.zeros(0), 1.0, 1e-8)
    x, nu = initial_centering(sub)
    assert nu == 1.0
    np.testing.assert_array_equal(x, np.zeros(2))


def test_centering_large_linear_term():
    c = np.array([6e5, 8e5])  # |c|_2 = 1e6
    sub = SubQp(np.eye(2), c, np.zeros((0, 2)), np.zeros(0), 1.0, 1e-8)
    _, nu = initial_centering(sub)
    assert nu >= 4e6
    assert nu == 1e7


def test_centering_post_state(rng):
    for _ in range(20):
        sub = random_sub(rng, n=int(rng.integers(1, 4)))
        x, nu = initial_centering(sub)
        assert np.linalg.norm(eval_psi_nu(sub, nu, x)[1]) <= 1e-8
        assert np.all(np.abs(2 * x) < 1)


def test_centering_rejects_non_finite():
    sub = SubQp(np.eye(1), np.array([np.inf]), np.zeros((0, 1)), np.zeros(0), 1.0, 1e-8)
    with pytest.raises(CenteringError):
        initial_centering(sub)


# residual and Newton system


def test_F_vanishes_at_exact_center():
    nu = 0.3
    sub = SubQp(np.zeros((1, 1)), np.zeros(1), np.zeros((0, 1)), np.zeros(0), 1.0, 1e-8)
    z = PrimalDualPoint(np.zeros(1), np.zeros(0), np.array([nu]), np.array([nu]))
    np.testing.assert_array_equal(eval_F(sub, nu, z), np.zeros(3))


def test_F_lambda_recovery_cancels_penalty_row(rng):
    sub = random_sub(rng, n=3, m=2)
    x = random_interior(rng, 3)
    z = initial_point(sub, x, 1.0)
    r2 = eval_F(sub, 1.0, z)[3:5]
    assert np.abs(r2).max() <= 1e-15 * (1 + np.abs(sub.A).sum() + np.abs(sub.b).max())


def test_F_matches_loop_implementation(rng):
    for _ in range(20):
        sub = random_sub(rng, omega=1.0)
        z = random_point(rng, sub)
        nu = float(rng.uniform(0, 1))
        ref = residual_F(sub.Q.tolist(), sub.c_lin.tolist(), sub.A.tolist(), sub.b.tolist(), sub.omega, nu,
                         z.x.tolist(), z.lam.tolist(), z.mu_l.tolist(), z.mu_r.tolist())
        np.testing.assert_allclose(eval_F(sub, nu, z), ref, rtol=0, atol=1e-14 * (1 + np.abs(ref).max()) * sub.n)


def test_jacobian_matches_fd(rng):
    for _ in range(10):
        sub = random_sub(rng, omega=float(rng.choice([1e-3, 1.0])))
        z = random_point(rng, sub)
        nu = 0.1
        n, m = sub.n, sub.m
        fd = central_difference(lambda v: eval_F(sub, nu, PrimalDualPoint.from_stacked(v, n, m)), z.stacked()).T
        assert relative_error(jacobian_F(sub, z), fd) <= 1e-5


def test_kkt_zero_rhs(rng):
    sub = random_sub(rng, n=3, m=2)
    z = random_point(rng, sub)
    np.testing.assert_array_equal(solve_kkt(sub, z, np.zeros(3 * 3 + 2)), np.zeros(11))


def test_kkt_scalar_closed_form():
    # DF = [[q, -1, 1], [mu_l, 1 + x, 0], [-mu_r, 0, 1 - x]]; Cramer's rule in exact arithmetic
    q, x, ml, mr = Fraction(2), Fraction(1, 4), Fraction(3, 2), Fraction(1, 2)
    rhs = [Fraction(1), Fraction(-2), Fraction(3)]
    M = [[q, Fraction(-1), Fraction(1)], [ml, 1 + x, Fraction(0)], [-mr, Fraction(0), 1 - x]]

    def det(a):
        return (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))

    D = det(M)
    expected = []
    for k in range(3):
        Mk = [row[:] for row in M]
        for i in range(3):
            Mk[i][k] = rhs[i]
        expected.append(float(det(Mk) / D))
    sub = SubQp(np.array([[2.0]]), np.zeros(1), np.zeros((0, 1)), np.zeros(0), 1.0, 1e-8)
    z = PrimalDualPoint(np.array([0.25]), np.zeros(0), np.array([1.5]), np.array([0.5]))
    np.testing.assert_allclose(solve_kkt(sub, z, np.array([1.0, -2.0, 3.0])), expected, rtol=1e-14)


def test_kkt_residual_small(rng):
    for _ in range(20):
        sub = random_sub(rng)
        z = random_point(rng, sub)
        rhs = rng.standard_normal(3 * sub.n + sub.m)
        dz = solve_kkt(sub, z, rhs)
        assert np.abs(jacobian_F(sub, z) @ dz - rhs).max() <= 1e-8 * np.abs(rhs).max()


def test_kkt_failure_on_indefinite():
    sub = SubQp(-10 * np.eye(2), np.zeros(2), np.zeros((0, 2)), np.zeros(0), 1.0, 1e-8)
    z = PrimalDualPoint(np.zeros(2), np.zeros(0), np.full(2, 1e-3), np.full(2, 1e-3))
    with pytest.raises(KktError):
        solve_kkt(sub, z, np.ones(6))


# full solve


def test_solve_unit_quadratic(backend):
    sub = SubQp(np.eye(1), np.zeros(1), np.zeros((0, 1)), np.zeros(0), 1.0, 1e-8)
    x, z, stats = solve_subqp(sub, 1e-10, backend=backend)
    assert abs(x[0]) <= 1e-6
    assert stats.final_residual <= 1e-10


def test_solve_linear_rate_step(backend):
    params = PenaltyParams()
    sub = SubQp(np.array([[params.rho]]), np.array([-0.5]), np.zeros((0, 1)), np.zeros(0), params.omega,
                params.tau)
    x, _, _ = solve_subqp(sub, inner_tolerance(params.tol, sub), backend=backend)
    assert abs(x[0] - subqp_minimizer(sub)[0]) <= 1e-8


def test_solve_two_dim_penalized(backend):
    sub = SubQp(np.array([[2.0, 0.3], [0.3, 1.0]]), np.array([0.4, -0.7]), np.array([[1.0, 1.0]]),
                np.array([0.2]), 1e-7, 1e-7)
    x, _, _ = solve_subqp(sub, inner_tolerance(1e-8, sub), backend=backend)
    assert np.abs(x - subqp_minimizer(sub)).max() <= 1e-6


def test_iteration_limit_carries_stats(rng):
    sub = random_sub(rng, n=3, m=1, omega=1e-7)
    with pytest.raises(InnerIterationLimit) as info:
        solve_subqp(sub, 1e-300, max_iter=2)
    assert info.value.stats.pd_iterations == 2
    assert info.value.stats.status == "max_iter"


def test_rejects_non_positive_tolerance(rng):
    with pytest.raises(ValueError):
        solve_subqp(random_sub(rng), 0.0)


def test_inner_tolerance_rule():
    sub = SubQp(np.eye(1), np.array([1e12]), np.zeros((0, 1)), np.zeros(0), 1.0, 1e-8)
    assert inner_tolerance(1e-8, sub) == pytest.approx(1e3 * np.finfo(float).eps * (1 + 1e12))
    small = SubQp(np.eye(1), np.zeros(1), np.zeros((0, 1)), np.zeros(0), 1.0, 1e-8)
    assert inner_tolerance(1e-8, small) == 1e-10
    assert inner_tolerance(1.0, small) == 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_solve_invariants(seed, consistent):
    rng = np.random.default_rng(seed)
    sub = random_sub(rng, consistent=consistent)
    x, z, stats = solve_subqp(sub, inner_tolerance(1e-8, sub))
    assert np.all(np.abs(x) < 1) and z.is_interior()
    assert np.all(stats.trace[:, 3] >= sub.tau)
    assert np.all((stats.trace[:, 1] > 0) & (stats.trace[:, 1] <= 1))
    assert stats.final_residual <= stats.tolerance
    # independent evaluation order, so allow one more rounding allowance
    assert np.abs(eval_F(sub, sub.tau, z)).max() <= 2 * stats.tolerance
    assert np.abs(q_grad(sub, x)).max() <= np.abs(q_grad(sub, z.x)).max()


def test_every_iterate_interior(rng):
    # replay the loop one iteration at a time
    sub = random_sub(rng, n=3, m=2, omega=1e-7)
    _, _, full = solve_subqp(sub, 1e-10)
    for k in range(1, full.pd_iterations + 1):
        try:
            _, z, _ = solve_subqp(sub, 1e-300, max_iter=k)
        except InnerIterationLimit:
            continue
        assert z.is_interior()


def test_refine_never_increases_gradient(rng):
    for _ in range(10):
        sub = random_sub(rng, omega=1e-7)
        x0 = random_interior(rng, sub.n, margin=0.3)
        x, taken = refine_minimizer(sub, x0)
        assert np.abs(q_grad(sub, x)).max() <= np.abs(q_grad(sub, x0)).max()
        assert 0 <= taken <= 3 and np.all(np.abs(x) < 1)


def test_direct_gradient_oracle_agrees(rng):
    sub = random_sub(rng, n=3, m=2, omega=1.0)
    x = random_interior(rng, 3)
    np.testing.assert_allclose(q_grad(sub, x), q_gradient_direct(sub, x), rtol=1e-12, atol=1e-12)
