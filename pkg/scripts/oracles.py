"""Independent oracles for the derived reference values used in the test suite.

Nothing here imports vispar: every number comes from brute force, sympy, or
plain arithmetic. Run it to regenerate the table that the tests freeze:

    python3 scripts/oracles.py
"""

import itertools
import math

import numpy as np
import sympy as sp


def pucci_brute(m, lam, Lam, sign=+1, samples=201):
    """max (or min) of tr(A M) over A = Q diag(a) Q^T, a_i on a dense grid in [lam, Lam]."""
    w, q = np.linalg.eigh(np.asarray(m, float))
    grid = np.linspace(lam, Lam, samples)
    best = -math.inf if sign > 0 else math.inf
    for a in itertools.product(grid, repeat=len(w)):
        a_mat = q @ np.diag(a) @ q.T
        v = float(np.trace(a_mat @ m))
        best = max(best, v) if sign > 0 else min(best, v)
    return best


def bellman_lse(mats, theta, m):
    tr = [float(np.trace(a @ m)) for a in mats]
    base = theta * math.log(sum(math.exp(t / theta) for t in tr))
    zero = theta * math.log(len(mats))
    return base - zero


def cross_difference_symbolic():
    x, y, h = sp.symbols("x y h")
    u = x * y
    stencil = (u.subs({x: x + h, y: y + h}) - u.subs({x: x + h, y: y - h})
               - u.subs({x: x - h, y: y + h}) + u.subs({x: x - h, y: y - h})) / (4 * h * h)
    return sp.simplify(stencil)


def degenerate_profile_residual():
    x, t = sp.symbols("x t", positive=True)
    u = t + sp.sqrt(2) * sp.Rational(2, 3) * x ** sp.Rational(3, 2)
    ux = sp.diff(u, x)
    return sp.simplify(sp.diff(u, t) - sp.Abs(ux) * sp.diff(u, x, 2)), sp.simplify(ux - sp.sqrt(2 * x))


def general_profile_residual(gamma):
    """Residual of c t + k z^beta with the closed-form k, beta, for u_t = |u_z|^gamma u_zz."""
    z, t, c = sp.symbols("z t c", positive=True)
    g = sp.nsimplify(gamma)
    beta = (g + 2) / (g + 1)
    k = (g + 1) ** (1 / (g + 1)) * (g + 1) / (g + 2) * c ** (1 / (g + 1))
    u = c * t + k * z**beta
    uz = sp.diff(u, z)
    res = sp.diff(u, t) - uz**g * sp.diff(u, z, 2)
    return sp.simplify(sp.powsimp(sp.expand_power_base(res, force=True), force=True))


def barrier_fprime_at_zero():
    r, A, B = sp.symbols("r A B", positive=True)
    f = sp.log(1 + A * r / B) / A
    return sp.simplify(sp.diff(f, r).subs(r, 0))


def quotient_rate_on_sine(hs=(0.1, 0.05, 0.025, 0.0125), x0=0.3):
    errs = [abs(((math.sin(x0 + h) - math.sin(x0)) / h) ** 2 - math.cos(x0) ** 2) for h in hs]
    return [math.log(errs[i] / errs[i + 1], 2) for i in range(len(errs) - 1)]


def main():
    rows = {
        "parabolic_distance((1,0),0 ; (0,0),-0.04)": max(1.0, math.sqrt(0.04)),
        "osc x^2 on |x|<=1/2": 0.25 - 0.0,
        "pucci_plus diag(1,-1) lam=1 Lam=2": pucci_brute(np.diag([1.0, -1.0]), 1, 2, +1),
        "pucci_plus diag(-1,-1) lam=1 Lam=2": pucci_brute(np.diag([-1.0, -1.0]), 1, 2, +1),
        "pucci_minus diag(1,-1) lam=1 Lam=2": pucci_brute(np.diag([1.0, -1.0]), 1, 2, -1),
        "bellman {1,2} M=1 theta=1": bellman_lse([np.eye(1), 2 * np.eye(1)], 1.0, np.eye(1)),
        "bellman {1,2} M=1 theta=0.1": bellman_lse([np.eye(1), 2 * np.eye(1)], 0.1, np.eye(1)),
        "bellman {1,2} M=1 theta=0.01": bellman_lse([np.eye(1), 2 * np.eye(1)], 0.01, np.eye(1)),
        "rhs singular gamma=1 p=0.5 M=4": 0.5 * 4.0,
        "forward gradient x^2 at 1 h=0.1": ((1.1) ** 2 - 1.0) / 0.1,
        "cross difference of xy": cross_difference_symbolic(),
        "monotone pucci_plus x^2 lam=1 Lam=2": 2.0 * 2.0,
        "monotone pucci_plus -x^2 lam=1 Lam=2": 1.0 * -2.0,
        "compatibility residual x^2 (no time term)": abs(0.0 - 2.0),
        "profile gamma=1 residual, u_x - sqrt(2x)": degenerate_profile_residual(),
        "profile residual gamma=3": general_profile_residual(3),
        "profile residual gamma=-1/2": general_profile_residual(-0.5),
        "barrier f'(0)": barrier_fprime_at_zero(),
        "quotient x^2 at 0 h=0.1, v^h": ((0.01 - 0.0) / 0.1, ((0.01 - 0.0) / 0.1) ** 2),
        "v^h vs |Du|^2 observed orders on sin": quotient_rate_on_sine(),
        "cond:tau bound delta=0.1 gamma=1": min(0.9, 0.9**2),
        "time exponent alpha=0.5 gamma=1": (1 + 0.5) / (2 - 0.5),
        "time exponent alpha=0.25 gamma=3": (1 + 0.25) / (2 - 0.75),
        "caloric sup on closed Q_1 of x^2+2t": max(abs(x * x + 2 * t) for x in (-1, 0, 1) for t in (-1, 0)),
    }
    for k, v in rows.items():
        print(f"{k:48s} {v}")


if __name__ == "__main__":
    main()
