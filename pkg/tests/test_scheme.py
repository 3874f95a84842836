import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vispar.core import DomainError, Grid
from vispar.operators import DegeneracyProfile, EllipticOperator
from vispar.scheme import (
    GradientMode,
    NumericalBlowup,
    Stencil,
    StepController,
    StepRejected,
    direction_weights,
    discrete_gradient,
    discrete_hessian,
    gradient_field,
    hessian_field,
    monotone_pucci_plus,
    operator_field,
    rhs_field,
    step,
)


def square(n=9):
    return Grid.box([-1.0, -1.0], [1.0, 1.0], n, 0.0, 1.0, 1)


def line(n=11):
    return Grid.box([-1.0], [1.0], n, 0.0, 1.0, 1)


# -- gradients ---------------------------------------------------------------------------------------

def test_gradient_examples():
    g = square()
    X, Y = g.coords()
    assert np.allclose(gradient_field(np.full(g.counts, 2.0), g.h), 0.0)
    for mode in (GradientMode.CENTERED, GradientMode.FORWARD):
        assert np.allclose(gradient_field(3 * X - 2 * Y + 1, g.h, mode), [3.0, -2.0], atol=1e-12)
    x = np.array([0.9, 1.0, 1.1])
    # oracle: ((1.1)^2 - 1^2) / 0.1
    got = discrete_gradient(x**2, (1,), 0.1, GradientMode.FORWARD)
    assert got.vector[0] == pytest.approx(2.100000000000002, rel=1e-12)
    assert not got.one_sided


def test_gradient_edge_falls_back():
    x = np.linspace(0, 1, 5)
    got = discrete_gradient(2 * x, (4,), 0.25)
    assert got.one_sided and got.vector[0] == pytest.approx(2.0)


def test_slice_too_small():
    with pytest.raises(DomainError):
        gradient_field(np.zeros((2, 5)), 0.1)


# -- Hessians ------------------------------------------------------------------------------------

@pytest.mark.parametrize("stencil", [Stencil.centered(), Stencil.wide(2)], ids=["centered", "wide"])
def test_hessian_quadratic_exactness(stencil):
    g = square()
    X, Y = g.coords()
    assert np.allclose(hessian_field(2 * X + Y - 1, g.h, stencil), 0.0, atol=1e-10)
    hess = hessian_field(X**2 - Y**2, g.h, stencil)
    assert np.allclose(hess, np.diag([2.0, -2.0]), atol=1e-10)
    # oracle: the four-point cross difference of xy simplifies to 1
    hess = hessian_field(X * Y, g.h, stencil)
    assert np.allclose(hess[..., 0, 1], 1.0, atol=1e-10)
    assert np.allclose(hess[..., 0, 0], 0.0, atol=1e-10)


def test_discrete_hessian_interior_only():
    g = square()
    X, _ = g.coords()
    assert discrete_hessian(X**2, (4, 4), g.h)[0, 0] == pytest.approx(2.0)
    with pytest.raises(DomainError):
        discrete_hessian(X**2, (0, 4), g.h)


def test_monotone_pucci_examples():
    x = np.array([-0.1, 0.0, 0.1])
    assert monotone_pucci_plus(x**2, (1,), 0.1, [(1,)], 1.0, 2.0) == pytest.approx(4.0)
    assert monotone_pucci_plus(2 * x + 1, (1,), 0.1, [(1,)], 1.0, 2.0) == pytest.approx(0.0, abs=1e-12)
    assert monotone_pucci_plus(-(x**2), (1,), 0.1, [(1,)], 1.0, 2.0) == pytest.approx(-2.0)


def test_direction_weights_reproduce_matrix():
    dirs = Stencil.wide(2).directions
    a = np.array([[1.5, 0.3], [0.3, 1.0]])
    c = direction_weights(a, dirs)
    assert np.all(c >= 0)
    rebuilt = sum(ci * np.outer(e, e) / np.dot(e, e) for ci, e in zip(c, np.array(dirs, float)))
    assert np.allclose(rebuilt, a)


def test_direction_weights_reject_strong_anisotropy():
    with pytest.raises(ValueError):
        direction_weights(np.array([[1.0, 1.5], [1.5, 3.0]]), Stencil.wide(2).directions)


def test_stencil_validation():
    with pytest.raises(ValueError):
        Stencil(Stencil.wide(2).kind, ((1, 1),))
    with pytest.raises(ValueError):
        Stencil(Stencil.wide(2).kind, ((2, 0), (0, 1)))


# -- right-hand side and step -----------------------------------------------------------------------------

HEAT = EllipticOperator.linear(np.eye(1))


def test_rhs_fixed_points():
    g = square()
    X, Y = g.coords()
    op = EllipticOperator.smooth_bellman([np.eye(2), np.diag([1.0, 2.0])], 0.1)
    for stencil in (Stencil.centered(), Stencil.wide(2)):
        ev = rhs_field(np.zeros(g.counts), g, op, DegeneracyProfile(1.0, 0.1), stencil)
        assert np.allclose(ev.value, 0.0)
        ev = rhs_field(0.3 * X - Y + 2, g, op, DegeneracyProfile(-0.5, 0.2), stencil)
        assert np.allclose(ev.value, 0.0, atol=1e-12)


def test_heat_step_on_quadratic():
    g = line(21)
    x = g.coords()[0]
    u = x**2
    ctrl = StepController(0.9)
    ev = rhs_field(u, g, HEAT, DegeneracyProfile(0.0), Stencil.centered())
    dt = ctrl.bound(ev, g, HEAT)
    new = step(u, g, HEAT, DegeneracyProfile(0.0), Stencil.centered(), ctrl, dt, u + 2 * dt)
    # oracle: the rhs of x^2 is exactly 2
    assert np.allclose(new, u + 2 * dt, atol=1e-14)
    assert ctrl.accepted == 1


def test_step_rejects_large_dt():
    g = line()
    x = g.coords()[0]
    ctrl = StepController(0.5)
    with pytest.raises(StepRejected):
        step(x**2, g, HEAT, DegeneracyProfile(0.0), Stencil.centered(), ctrl, 1.0, x**2)
    assert ctrl.rejected == 1


def test_step_reports_blowup():
    g = line()
    u = np.zeros(g.counts)
    u[5] = 1e308
    ctrl = StepController(0.9)
    with pytest.raises(NumericalBlowup), np.errstate(all="ignore"):
        step(u, g, HEAT, DegeneracyProfile(0.0), Stencil.wide(1), ctrl, 1e-6, np.zeros(g.counts))


def test_controller_safety_range():
    with pytest.raises(ValueError):
        StepController(1.0)


PROFILES = [DegeneracyProfile(-0.5, 0.2), DegeneracyProfile(0.0), DegeneracyProfile(1.0, 0.1)]
OPS2 = [
    EllipticOperator.linear([[1.5, 0.3], [0.3, 1.0]]),
    EllipticOperator.smooth_bellman([np.eye(2), np.diag([1.0, 2.0])], 0.1),
    EllipticOperator.pucci(1.0, 2.0, 2),
]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), which=st.integers(0, 8), bump=st.floats(1e-6, 0.05))
def test_wide_step_is_monotone(seed, which, bump):
    """Raising one value never lowers any updated value (monotone mode)."""
    g = square(7)
    op = OPS2[which % 3]
    prof = PROFILES[which // 3]
    stencil = Stencil.wide(2)
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, g.counts)
    v = u.copy()
    idx = tuple(rng.integers(0, 7, 2))
    v[idx] += bump
    ctrl = StepController(0.9)
    dt = min(ctrl.bound(rhs_field(w, g, op, prof, stencil), g, op) for w in (u, v))
    a = step(u, g, op, prof, stencil, ctrl, dt, u)
    b = step(v, g, op, prof, stencil, ctrl, dt, v)
    assert np.all(b >= a - 1e-12)


def test_operator_field_pucci_uses_axes():
    g = square()
    X, Y = g.coords()
    op = EllipticOperator.pucci(1.0, 2.0, 2)
    # diagonal directions would see the cross term of xy; the axis-only discretisation sees zero
    assert np.allclose(operator_field(op, X * Y, g.h, Stencil.wide(2)), 0.0)
    assert np.allclose(operator_field(op, X**2 - Y**2, g.h, Stencil.wide(2)), 2.0 * 2.0 - 1.0 * 2.0)
