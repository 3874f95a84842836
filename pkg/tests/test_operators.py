import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vispar.operators import (
    DegeneracyMode,
    DegeneracyProfile,
    EllipticOperator,
    SingularEvaluationError,
    degeneracy,
    degeneracy_slope,
    evaluate_operator,
    pucci_minus,
    pucci_plus,
    rhs,
    scaled_operator,
    symmetric,
)

entry = st.floats(-5, 5, allow_nan=False, allow_subnormal=False)


@st.composite
def sym2(draw):
    a, b, c = draw(entry), draw(entry), draw(entry)
    return np.array([[a, b], [b, c]])


@st.composite
def psd2(draw):
    q = draw(sym2())
    return q @ q.T


OPERATORS = [
    EllipticOperator.pucci(1.0, 2.0, 2),
    EllipticOperator.pucci(1.0, 2.0, 2, sign=-1),
    EllipticOperator.linear([[1.5, 0.2], [0.2, 1.0]]),
    EllipticOperator.smooth_bellman([np.eye(2), np.diag([1.0, 2.0])], 0.1),
]


# -- Pucci ------------------------------------------------------------------------------------------

def test_pucci_examples():
    # brute-force oracle over lam I <= A <= Lam I (scripts/oracles.py)
    assert pucci_plus(np.zeros((2, 2)), 1, 2) == 0
    assert pucci_plus(np.diag([1.0, -1.0]), 1, 2) == pytest.approx(1.0)
    assert pucci_plus(np.diag([-1.0, -1.0]), 1, 2) == pytest.approx(-2.0)
    assert pucci_minus(np.zeros((2, 2)), 1, 2) == 0
    assert pucci_minus(np.diag([1.0, -1.0]), 1, 2) == pytest.approx(-1.0)


def test_pucci_rejects_bad_constants():
    with pytest.raises(ValueError):
        pucci_plus(np.eye(2), 2.0, 1.0)
    with pytest.raises(ValueError):
        EllipticOperator.pucci(0.0, 1.0, 2)


@given(sym2())
def test_pucci_duality(m):
    assert pucci_minus(m, 1, 2) == pytest.approx(-pucci_plus(-m, 1, 2), abs=1e-12)


@given(sym2(), sym2())
def test_pucci_subadditive(m, n):
    assert pucci_plus(m + n, 1, 2) <= pucci_plus(m, 1, 2) + pucci_plus(n, 1, 2) + 1e-9


def test_symmetric_checks():
    with pytest.raises(ValueError):
        symmetric([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        symmetric([[1.0, 2.0, 3.0]])


# -- operators ---------------------------------------------------------------------------------------

def test_operator_examples():
    lin = EllipticOperator.linear(np.eye(2))
    assert evaluate_operator(lin, np.diag([2.0, 3.0])) == pytest.approx(5.0)
    for op in OPERATORS:
        assert evaluate_operator(op, np.zeros((2, 2))) == pytest.approx(0.0, abs=1e-14)


def test_bellman_approaches_max():
    # oracle values of theta log sum exp - theta log 2 for {1, 2} at M = 1
    frozen = {1.0: 1.6201145069582772, 0.1: 1.9306898218339272, 0.01: 1.9930685281944005}
    vals = []
    for theta, want in frozen.items():
        op = EllipticOperator.smooth_bellman([np.eye(1), 2 * np.eye(1)], theta)
        got = float(evaluate_operator(op, np.eye(1)))
        assert got == pytest.approx(want, rel=1e-12)
        vals.append(got)
    assert vals[0] < vals[1] < vals[2] < 2.0


def test_bellman_rejects_bad_family():
    with pytest.raises(ValueError):
        EllipticOperator.smooth_bellman([], 0.1)
    with pytest.raises(ValueError):
        EllipticOperator.smooth_bellman([np.eye(2)], 0.0)
    with pytest.raises(ValueError):
        EllipticOperator.smooth_bellman([np.eye(2), np.eye(3)], 0.1)


def test_linear_rejects_violated_bounds():
    with pytest.raises(ValueError):
        EllipticOperator.linear(np.diag([1.0, 3.0]), lam=1.0, Lam=2.0)


@pytest.mark.parametrize("op", OPERATORS, ids=lambda o: o.kind.value)
@settings(max_examples=40, deadline=None)
@given(m=sym2(), p=psd2())
def test_uniform_ellipticity(op, m, p):
    # lam tr P <= F(M + P) - F(M) <= Lam tr P for P >= 0
    d = float(evaluate_operator(op, m + p) - evaluate_operator(op, m))
    tr = float(np.trace(p))
    assert op.lam * tr - 1e-9 * (1 + tr) <= d <= op.Lam * tr + 1e-9 * (1 + tr)


@given(sym2())
def test_scaled_examples(m):
    lin = EllipticOperator.linear([[2.0, 0.5], [0.5, 1.0]])
    assert evaluate_operator(scaled_operator(lin, 3.0), m) == pytest.approx(float(evaluate_operator(lin, m)))
    bell = OPERATORS[3]
    s2 = scaled_operator(bell, 2.0)
    assert float(evaluate_operator(s2, m)) == pytest.approx(0.5 * float(evaluate_operator(bell, 2 * m)))


def test_pucci_scaling_is_homogeneous():
    op = scaled_operator(EllipticOperator.pucci(1, 2, 2), 2.0)
    assert float(evaluate_operator(op, np.diag([1.0, -1.0]))) == pytest.approx(1.0)
    assert op.lam == 1 and op.Lam == 2


def test_operator_dimension_check():
    with pytest.raises(ValueError):
        evaluate_operator(OPERATORS[2], np.eye(3))


def test_smoothness_flags():
    assert [op.is_smooth for op in OPERATORS] == [False, False, True, True]


# -- degeneracy ------------------------------------------------------------------------------------

def test_degeneracy_examples():
    assert degeneracy(DegeneracyProfile(0.0), [3.0, 4.0]) == 1.0
    assert degeneracy(DegeneracyProfile(0.0, 0.0, DegeneracyMode.SINGULAR), [0.0]) == 1.0
    assert degeneracy(DegeneracyProfile(2.0, 0.0), [3.0, 4.0]) == pytest.approx(25.0)
    assert degeneracy(DegeneracyProfile(-1.0, 1.0), [0.0, 0.0]) == pytest.approx(1.0)


def test_singular_zero_gradient():
    prof = DegeneracyProfile(-0.5, 0.0, DegeneracyMode.SINGULAR)
    with pytest.raises(SingularEvaluationError):
        degeneracy(prof, [0.0])
    assert degeneracy(prof, [4.0]) == pytest.approx(0.5)


def test_regularized_negative_needs_epsilon():
    with pytest.raises(ValueError):
        DegeneracyProfile(-1.0, 0.0)
    with pytest.raises(ValueError):
        DegeneracyProfile(1.0, -0.1)


@given(st.floats(-1.9, 3.0), st.floats(0.05, 2.0), st.floats(0.0, 10.0))
def test_regularized_profile_bounds(gamma, eps, p):
    prof = DegeneracyProfile(gamma, eps)
    g = float(degeneracy(prof, [p]))
    assert g > 0
    assert g <= prof.bound(p) * (1 + 1e-12)


@given(st.floats(0.1, 3.0), st.floats(0.05, 1.0), st.floats(0.01, 5.0))
def test_slope_matches_finite_difference(gamma, eps, p):
    prof = DegeneracyProfile(gamma, eps)
    h = 1e-6
    fd = (float(degeneracy(prof, [p + h])) - float(degeneracy(prof, [p - h]))) / (2 * h)
    assert float(degeneracy_slope(prof, p)) == pytest.approx(abs(fd), rel=1e-5, abs=1e-8)


def test_rhs_examples():
    lin1 = EllipticOperator.linear(np.eye(1))
    assert rhs(lin1, DegeneracyProfile(1.0, 0.1), [0.3], np.zeros((1, 1))) == 0
    assert rhs(lin1, DegeneracyProfile(0.0), [0.0], np.diag([2.0]), 1.0) == pytest.approx(3.0)
    sing = DegeneracyProfile(1.0, 0.0, DegeneracyMode.SINGULAR)
    assert rhs(lin1, sing, [0.5], np.diag([4.0])) == pytest.approx(2.0)
