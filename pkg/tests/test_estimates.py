import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vispar.core import DomainError, Grid
from vispar.estimates import (
    BarrierSpec,
    ExactSolution,
    OscBarrier,
    assert_gradient_max,
    assert_max_principle,
    barrier_recipe,
    barrier_value,
    calibrate_barrier,
    phi_c2_norm,
    check_osc_barrier,
    exact_eval,
    verify_barrier_domination,
)
from vispar.operators import DegeneracyProfile, EllipticOperator
from vispar.scheme import Stencil
from vispar.solver import DirichletProblem, solve

HEAT1 = EllipticOperator.linear(np.eye(1))
ANISO2 = EllipticOperator.linear(np.diag([1.0, 1.5]))


def q1(n=21, steps=4, dim=1):
    return Grid.box([-1.0] * dim, [1.0] * dim, n, -1.0, 0.0, steps)


def ball(n=33, steps=4):
    return Grid.ball((0.0, 0.0), 1.0, n, -1.0, 0.0, steps)


def run(grid, phi, op=None, gamma=0.0, eps=0.0, stencil=None):
    op = op or EllipticOperator.linear(np.eye(grid.dim))
    stencil = stencil or Stencil.wide(grid.dim)
    return solve(DirichletProblem(grid, op, DegeneracyProfile(gamma, eps), phi, stencil=stencil))


# -- boundary barriers -----------------------------------------------------------------------------

def test_barrier_function_examples():
    spec = BarrierSpec(1.0, 1.0, (2.0, 0.0))
    assert spec.f(0.0) == 0.0
    assert float(spec.f(math.e - 1)) == pytest.approx(1.0)
    zero = lambda x, y, t: 0.0 * x  # noqa: E731
    assert barrier_value(spec, zero, ((1.0, 0.0), 0.0)) == 0.0
    # |x - y| = e puts the point at d = e - 1, where f = 1
    x = (2.0 - math.e, 0.0)
    assert barrier_value(spec, lambda x, y, t: x + y, (x, 0.0)) == pytest.approx(x[0] + 1.0)


def test_barrier_fprime_at_zero():
    # oracle: f'(0) = 1/B, checked against a central difference
    for B in (0.5, 1.0, 2.0):
        spec = BarrierSpec(3.0, B, (2.0,))
        fd = (float(spec.f(1e-6)) - float(spec.f(-1e-6))) / 2e-6
        assert float(spec.fprime(0.0)) == pytest.approx(1 / B)
        assert fd == pytest.approx(1 / B, rel=1e-6)


@given(st.floats(0.1, 10), st.floats(0.1, 2.0), st.floats(0.0, 3.0))
def test_barrier_derivative_identities(A, B, r):
    spec = BarrierSpec(A, B, (2.0,))
    step = 1e-4 * max(1.0, r)
    fd1 = (float(spec.f(r + step)) - float(spec.f(r - step))) / (2 * step) if r > step else \
        (float(spec.f(r + step)) - float(spec.f(r))) / step
    assert float(spec.fprime(r)) == pytest.approx(1 / (B + A * r))
    assert float(spec.fsecond(r)) == pytest.approx(-A * float(spec.fprime(r)) ** 2)
    if r > step:
        assert fd1 == pytest.approx(float(spec.fprime(r)), rel=1e-6)
        fd2 = (float(spec.f(r + step)) - 2 * float(spec.f(r)) + float(spec.f(r - step))) / step**2
        assert fd2 == pytest.approx(float(spec.fsecond(r)), rel=1e-3, abs=1e-6)


def test_barrier_outside_annulus():
    spec = BarrierSpec(1.0, 1.0, (2.0, 0.0), m=0.1)
    with pytest.raises(DomainError):
        barrier_value(spec, lambda x, y, t: 0.0, ((-1.0, 0.0), 0.0))


def test_barrier_singular_cap():
    with pytest.raises(ValueError):
        BarrierSpec(1.0, 3.0, (2.0,), gamma=-0.5)
    BarrierSpec(1.0, 3.0, (2.0,), gamma=0.5)
    assert barrier_recipe(1e-6, 0.0, -0.5, 1.0) == pytest.approx(math.sqrt(5))


def test_barrier_recipe_formula():
    # B^{-1} = 2 e^{(2 + 2/(gamma+2)) A m} ||phi||
    B = barrier_recipe(3.0, 0.5, 1.0, 2.0)
    assert 1 / B == pytest.approx(2 * math.exp((2 + 2 / 3) * 2.0 * 0.5) * 3.0)
    with pytest.raises(ValueError):
        barrier_recipe(1.0, 1.0, -2.0, 1.0)


def test_domination_trivial_zero_data():
    rep = run(ball(), lambda x, y, t: 0 * x, ANISO2, gamma=1.0, eps=1.0)
    out = verify_barrier_domination(rep, BarrierSpec(16.0, 0.5, (2.0, 0.0), m=0.2))
    assert out.passed, out.to_dict()
    assert out.measured == 0.0


def test_domination_linear_data():
    rep = run(ball(), lambda x, y, t: 0.5 * x - y + 0 * t, ANISO2, gamma=1.0, eps=1.0)
    out = verify_barrier_domination(rep, BarrierSpec(16.0, 0.5, (2.0, 0.0), m=0.2))
    assert out.passed, out.to_dict()
    assert out.details["checked_interior_nodes"] > 0


def test_domination_needs_interior_nodes():
    rep = run(ball(9, 1), lambda x, y, t: 0 * x, ANISO2, gamma=1.0, eps=1.0)
    out = verify_barrier_domination(rep, BarrierSpec(4.0, 1.0, (2.0, 0.0), m=1e-3))
    assert out.details["checked_interior_nodes"] == 0
    assert not out.passed


def test_domination_geometry_mismatch():
    rep = run(ball(9, 1), lambda x, y, t: 0 * x, ANISO2, gamma=1.0, eps=1.0)
    with pytest.raises(DomainError):
        verify_barrier_domination(rep, BarrierSpec(1.0, 1.0, (0.5, 0.0)))
    with pytest.raises(DomainError):
        calibrate_barrier(rep, (0.5, 0.0))


def test_far_annulus_is_not_dominated():
    # outside the barrier annulus the anisotropic operator beats the barrier's concavity
    rep = run(ball(), lambda x, y, t: 0 * x, ANISO2, gamma=1.0, eps=1.0)
    out = verify_barrier_domination(rep, BarrierSpec(4.0, 1.0, (2.0, 0.0), m=1.0))
    assert not out.passed
    assert out.details["supersolution_defect"] > 0


def test_calibration_keeps_recipe_relation():
    def phi(x, y, t):
        return 0.2 * (x * x + y * y) + 0.1 * t

    rep = run(ball(33, 4), phi, ANISO2, gamma=1.0, eps=1.0)
    spec = calibrate_barrier(rep, (1.0, 0.0))
    # the calibrated B is the recipe value for the calibrated A
    assert spec.B == pytest.approx(barrier_recipe(phi_c2_norm(rep), spec.m, 1.0, spec.A))
    assert math.log2(spec.A).is_integer()


# -- exact solutions ---------------------------------------------------------------------------------

def test_exact_linear():
    sol = ExactSolution.linear([1.0, -2.0], 3.0)
    X = ((0.5, 0.25), 0.7)
    assert exact_eval(sol, X) == pytest.approx(3.0)
    assert np.allclose(exact_eval(sol, X, "gradient"), [1.0, -2.0])
    assert np.allclose(exact_eval(sol, X, "hessian"), 0.0)
    with pytest.raises(ValueError):
        exact_eval(sol, X, "laplacian")
    with pytest.raises(DomainError):
        exact_eval(sol, ((1.0,), 0.0))


def test_exact_caloric():
    sol = ExactSolution.caloric([[1.0]])
    assert exact_eval(sol, ((1.0,), 0.5)) == pytest.approx(2.0)
    assert exact_eval(sol, ((1.0,), 0.5), "time") == pytest.approx(2.0)


def test_profile_gamma_one_closed_form():
    sol = ExactSolution.degenerate_profile(1.0)
    x = np.linspace(0.1, 10, 50)
    # oracle: u_x = sqrt(2x), u = t + (2/3) sqrt 2 x^{3/2}
    assert np.allclose(sol.gradient((x,), 0.0)[..., 0], np.sqrt(2 * x), rtol=1e-14)
    assert np.allclose(sol.value((x,), 0.3), 0.3 + math.sqrt(2) * 2 / 3 * x**1.5, rtol=1e-14)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0, 3.0, -0.5])
def test_profile_residual_vanishes(gamma):
    x = np.linspace(0.1, 10, 200)
    for c in (0.3, 1.0, 2.0):
        sol = ExactSolution.degenerate_profile(gamma, c)
        res = sol.residual((x,), 0.0)
        assert np.abs(res).max() <= 1e-12 * max(1.0, c)


def test_profile_domain():
    sol = ExactSolution.degenerate_profile(1.0, shift=0.5)
    with pytest.raises(DomainError):
        exact_eval(sol, ((0.25,), 0.0))
    with pytest.raises(DomainError):
        exact_eval(sol, ((0.5,), 0.0), "hessian")
    with pytest.raises(ValueError):
        ExactSolution.degenerate_profile(-1.0)


def test_exact_regression_caloric_2d():
    g = q1(17, 4, dim=2)
    op = EllipticOperator.linear([[1.5, 0.3], [0.3, 1.0]])
    sol = ExactSolution.caloric([[1.0, 0.5], [0.5, -0.5]], [0.2, 0.1], 1.0, operator=op)
    rep = run(g, sol.boundary(), op)
    X, Y = g.coords()
    exact = np.stack([sol.value((X, Y), t) for t in g.times()])
    assert np.abs(rep.solution.values - exact).max() < 1e-10


# -- oscillation barriers -----------------------------------------------------------------------------

@pytest.mark.parametrize("gamma", [0.0, 1.0, 2.0, -0.5])
def test_osc_barrier_supersolution(gamma):
    g = q1(33, 4, dim=2)
    op = EllipticOperator.linear([[1.5, 0.3], [0.3, 1.0]])
    bar = OscBarrier(gamma, 0.5, 2, op.Lam)
    eps = 0.5 if gamma < 0 else 0.1
    out = check_osc_barrier(bar, op, DegeneracyProfile(gamma, eps), g)
    assert out.passed, out.to_dict()
    assert out.details["branch"] == ("negative" if gamma < 0 else "nonnegative")


def test_osc_barrier_slopes():
    # 5 n A (1 + 16 A^2)^{gamma/2} Lam
    assert OscBarrier(1.0, 0.5, 2, 2.0).slope == pytest.approx(5 * 2 * 0.5 * math.sqrt(5) * 2.0)
    neg = OscBarrier(-0.5, 0.5, 2, 2.0)
    beta = 3.0
    assert neg.power == pytest.approx(beta)
    assert neg.slope == pytest.approx((2.0 * (2 + beta - 2) * (2 * beta) ** 0.5 + 1) * 0.5**0.5)
    with pytest.raises(ValueError):
        OscBarrier(-1.0, 0.5, 2, 2.0)


def test_osc_barrier_preconditions():
    g = q1(9, 1, dim=2)
    op = EllipticOperator.linear(np.eye(2))
    with pytest.raises(ValueError):
        check_osc_barrier(OscBarrier(1.0, 0.5, 2, 1.0), op, DegeneracyProfile(1.0, 1.0), g)
    with pytest.raises(ValueError):
        check_osc_barrier(OscBarrier(1.0, 0.5, 2, 0.5), op, DegeneracyProfile(1.0, 0.1), g)


# -- estimate assertions ------------------------------------------------------------------------------

def test_max_principle_zero_data():
    rep = run(q1(9, 2, dim=2), lambda x, y, t: 0 * x, gamma=1.0, eps=0.1)
    out = assert_max_principle(rep)
    assert out.passed and out.measured == 0.0


def test_max_principle_caloric_attained_on_boundary():
    sol = ExactSolution.caloric([[1.0]])
    rep = run(q1(41, 4), sol.boundary())
    out = assert_max_principle(rep)
    # oracle: sup of |x^2 + 2t| on the closed cylinder is 2, at x = +-1, t = 0
    assert out.bound == pytest.approx(2.0)
    assert out.passed


def test_max_principle_random_boundary():
    g = ball(17, 2)
    rng = np.random.default_rng(7)
    data = rng.uniform(-1, 1, g.counts)
    rep = run(g, lambda x, y, t: data, EllipticOperator.smooth_bellman([np.eye(2), np.diag([1.0, 2.0])], 0.1),
              gamma=1.0, eps=0.1)
    assert assert_max_principle(rep, 1e-12).passed


def test_gradient_max_linear_equality():
    rep = run(q1(13, 2, dim=2), lambda x, y, t: 2 * x - y + 0 * t, gamma=1.0, eps=0.1)
    out = assert_gradient_max(rep, tol=0.0)
    assert out.passed
    assert out.details["excess"] == pytest.approx(0.0, abs=1e-12)


def test_gradient_max_caloric():
    sol = ExactSolution.caloric([[1.0]])
    rep = run(q1(41, 4), sol.boundary())
    out = assert_gradient_max(rep)
    assert out.passed
    # the ring sits one node inside |x| = 1, so its sup is 2 - 2h
    assert out.bound == pytest.approx(2.0, abs=2 * rep.problem.grid.h + 1e-12)


def test_gradient_max_tolerance_trend():
    def phi(x, y, t):
        return np.sin(x) * np.cosh(y) + 0.2 * x * y + 0.1 * t

    excess, tols = [], []
    for n in (17, 33, 65):
        rep = run(q1(n, 4, dim=2), phi, gamma=1.0, eps=0.1)
        out = assert_gradient_max(rep)
        assert out.passed
        excess.append(max(out.details["excess"], 0.0))
        tols.append(out.tol)
    assert tols[0] > tols[1] > tols[2]
    assert excess[-1] <= excess[0] + 1e-12
