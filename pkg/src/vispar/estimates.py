"""Analytic oracles and a priori estimate checks.

Barriers for the boundary gradient bound, a small catalog of exact solutions,
the quadratic / power barriers that control oscillation in time, and assertion
helpers that read a :class:`~vispar.solver.SolveReport`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import GEOM_TOL, DomainError, Grid
from .operators import DegeneracyProfile, EllipticOperator, evaluate_operator
from .scheme import Stencil, StepController, rhs_field
from .solver import SolveReport, _as_time_function

__all__ = [
    "AssertionOutcome",
    "BarrierSpec",
    "barrier_value",
    "barrier_recipe",
    "calibrate_barrier",
    "verify_barrier_domination",
    "phi_c2_norm",
    "ExactFamily",
    "ExactSolution",
    "exact_eval",
    "OscBarrier",
    "check_osc_barrier",
    "assert_max_principle",
    "assert_gradient_max",
]


@dataclass(frozen=True)
class AssertionOutcome:
    """Result of one numerical check: ``measured <= bound + tol`` unless stated otherwise."""

    name: str
    passed: bool
    measured: float
    bound: float
    tol: float
    details: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.bound + self.tol - self.measured

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "measured": self.measured,
            "bound": self.bound,
            "tol": self.tol,
            "slack": self.slack,
            **self.details,
        }


# -- boundary barriers -------------------------------------------------------------------------

@dataclass(frozen=True)
class BarrierSpec:
    """w^± = phi ± f(d(x)), f(r) = log(1 + A r / B) / A, d(x) = |x - y| - 1.

    ``m`` fixes the annulus 0 <= d <= B (e^{A m} - 1) / A, on whose outer edge
    f = m; leave it as ``None`` for an unbounded annulus.
    """

    A: float
    B: float
    anchor: tuple[float, ...]
    sign: int = +1
    m: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "anchor", tuple(float(v) for v in np.atleast_1d(self.anchor)))
        if not (self.A > 0 and self.B > 0):
            raise ValueError("barrier constants A and B must be positive")
        if self.sign not in (+1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.m is not None and self.m < 0:
            raise ValueError("m is a sup of |u - phi| and cannot be negative")
        if self.gamma is not None and -2 < self.gamma < 0 and self.B > math.sqrt(5) * (1 + 1e-12):
            raise ValueError("singular case needs B <= sqrt(5)")

    def f(self, r):
        return np.log1p(self.A / self.B * np.asarray(r, float)) / self.A

    def fprime(self, r):
        return 1.0 / (self.B + self.A * np.asarray(r, float))

    def fsecond(self, r):
        return -self.A * self.fprime(r) ** 2

    @property
    def width(self) -> float:
        if self.m is None:
            return math.inf
        return self.B * math.expm1(self.A * self.m) / self.A

    def distance(self, coords) -> np.ndarray:
        return np.sqrt(sum((c - y) ** 2 for c, y in zip(coords, self.anchor))) - 1.0

    def in_annulus(self, d) -> np.ndarray:
        d = np.asarray(d, float)
        tol = GEOM_TOL * max(1.0, self.width if math.isfinite(self.width) else 1.0)
        return (d >= -tol) & (d <= self.width + tol)

    def with_sign(self, sign: int) -> "BarrierSpec":
        return BarrierSpec(self.A, self.B, self.anchor, sign, self.m, self.gamma)

    def values(self, phi_values, coords) -> np.ndarray:
        """Vectorised w^± over arrays of coordinates; no annulus check."""
        d = np.maximum(self.distance(coords), 0.0)
        return np.asarray(phi_values, float) + self.sign * self.f(d)


def barrier_value(spec: BarrierSpec, phi: Callable, X) -> float:
    """w^±(X) at one space-time point X = (x, t)."""
    x, t = X
    x = np.atleast_1d(np.asarray(x, float))
    if len(x) != len(spec.anchor):
        raise DomainError("point and anchor dimensions differ")
    d = float(spec.distance(tuple(x)))
    if not spec.in_annulus(d):
        raise DomainError(f"point at distance {d:.6g} from the unit sphere lies outside the annulus")
    return float(np.asarray(phi(*x, t), float)) + spec.sign * float(spec.f(max(d, 0.0)))


def barrier_recipe(phi_norm: float, m: float, gamma: float, A: float) -> float:
    """B from B^{-1} = 2 exp((2 + 2/(gamma+2)) A m) ||phi||_{C^2}; capped at sqrt 5 when gamma < 0."""
    if gamma <= -2:
        raise ValueError("boundary barriers need gamma > -2")
    if phi_norm <= 0:
        B = math.inf
    else:
        expo = (2 + 2 / (gamma + 2)) * A * m
        B = 1.0 / (2 * math.exp(expo) * phi_norm) if expo < 700 else 0.0
    if gamma < 0:
        B = min(B, math.sqrt(5))
    return B


def phi_c2_norm(report_or_problem) -> float:
    """Grid version of ||phi||_{C^2}: sup|phi| + sup|D phi| + sup|D^2 phi|_2 + sup|phi_t|."""
    problem = getattr(report_or_problem, "problem", report_or_problem)
    grid = problem.grid
    vals = problem.boundary_field().values
    sel = np.broadcast_to(grid.active, vals.shape)
    h = grid.h
    spatial = tuple(range(1, grid.dim + 1))
    grads = np.gradient(vals, h, axis=spatial, edge_order=2) if grid.dim > 1 else \
        [np.gradient(vals, h, axis=1, edge_order=2)]
    gnorm = np.sqrt(sum(g * g for g in grads))
    hess_sq = np.zeros_like(vals)
    for gi in grads:
        parts = np.gradient(gi, h, axis=spatial, edge_order=2) if grid.dim > 1 else \
            [np.gradient(gi, h, axis=1, edge_order=2)]
        for p in parts:
            hess_sq += p * p  # Frobenius bound on the spectral norm
    total = float(np.abs(vals[sel]).max()) + float(gnorm[sel].max()) + float(np.sqrt(hess_sq[sel]).max())
    if grid.steps >= 2:
        phi_t = np.gradient(vals, grid.dt, axis=0, edge_order=2)
        total += float(np.abs(phi_t[sel]).max())
    return total


def _check_ball_geometry(grid: Grid, x0) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, float))
    if len(x0) != grid.dim:
        raise DomainError("tangency point and grid dimensions differ")
    centre = np.asarray(grid.lower) + 0.5 * (np.asarray(grid.upper) - np.asarray(grid.lower))
    radius = 0.5 * (grid.upper[0] - grid.lower[0])
    if abs(radius - 1.0) > 1e-9 or abs(np.linalg.norm(x0 - centre) - 1.0) > 1e-9:
        raise DomainError("barrier geometry needs the unit ball and a tangency point on its sphere")
    if grid.active.all():
        raise DomainError("barrier geometry needs a masked-ball domain")
    return centre


def _march_defect(w_of_t, grid: Grid, op: EllipticOperator, profile: DegeneracyProfile,
                  stencil: Stencil, safety: float, select: np.ndarray) -> float:
    """max over time levels and selected interior nodes of (one explicit step of w) - w(t + dt)."""
    ctrl = StepController(safety)
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    worst = -math.inf
    for k, t in enumerate(grid.times()[:-1]):
        w = w_of_t(t)
        ev = rhs_field(w, grid, op, profile, stencil)
        dt = min(ctrl.bound(ev, grid, op), grid.dt)
        marched = w[inner] + dt * ev.value
        diff = (marched - w_of_t(t + dt)[inner])[select[inner]]
        if diff.size:
            worst = max(worst, float(diff.max()))
    return worst


def _barrier_defects(report: SolveReport, spec: BarrierSpec):
    problem = report.problem
    grid = problem.grid
    phi = _as_time_function(problem.boundary, grid)
    coords = grid.coords()
    d = spec.distance(coords)
    inside = grid.interior & spec.in_annulus(d) & (d > 0)
    plus, minus = spec.with_sign(+1), spec.with_sign(-1)
    sup = _march_defect(lambda t: plus.values(phi(t), coords), grid, problem.operator, problem.profile,
                        problem.stencil, problem.cfl_safety, inside)
    sub = _negated_defect(report, minus, coords, inside)
    return sup, sub, int(inside.sum())


def _negated_defect(report: SolveReport, spec: BarrierSpec, coords, select) -> float:
    """max of w(t + dt) - (one explicit step of w); <= 0 for a discrete subsolution."""
    problem = report.problem
    grid = problem.grid
    phi = _as_time_function(problem.boundary, grid)
    ctrl = StepController(problem.cfl_safety)
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    worst = -math.inf
    for t in grid.times()[:-1]:
        w = spec.values(phi(t), coords)
        ev = rhs_field(w, grid, problem.operator, problem.profile, problem.stencil)
        dt = min(ctrl.bound(ev, grid, problem.operator), grid.dt)
        diff = (spec.values(phi(t + dt), coords)[inner] - (w[inner] + dt * ev.value))[select[inner]]
        if diff.size:
            worst = max(worst, float(diff.max()))
    return worst


def calibrate_barrier(report: SolveReport, x0, A0: float = 1.0, doublings: int = 30,
                      tol: float = 1e-8) -> BarrierSpec:
    """Smallest A in A0 * 2^k whose recipe barrier passes the one-step super/sub checks.

    The construction only asks for A "large enough"; this makes the choice explicit.
    """
    grid = report.problem.grid
    centre = _check_ball_geometry(grid, x0)
    anchor = centre + 2 * (np.atleast_1d(np.asarray(x0, float)) - centre)
    gamma = report.problem.profile.gamma
    m = _sup_deviation(report)
    norm = phi_c2_norm(report)
    A = float(A0)
    last = None
    for _ in range(doublings + 1):
        B = barrier_recipe(norm, m, gamma, A)
        if not (B > 0 and math.isfinite(B)):
            break
        spec = BarrierSpec(A, B, tuple(anchor), +1, m, gamma)
        sup, sub, _ = _barrier_defects(report, spec)
        last = spec
        if sup <= tol and sub <= tol:
            return spec
        A *= 2
    if last is None:
        raise DomainError("barrier recipe degenerated (zero boundary data or overflow)")
    return last


def _sup_deviation(report: SolveReport) -> float:
    fld = report.problem.boundary_field().values
    u = report.solution.values
    sel = np.broadcast_to(report.problem.grid.active, u.shape)
    return float(np.abs(u - fld)[sel].max())


def verify_barrier_domination(report: SolveReport, spec: BarrierSpec, tol: float = 1e-8) -> AssertionOutcome:
    """u <= w^+ + tol and u >= w^- - tol on the annulus, plus the one-step barrier checks."""
    problem = report.problem
    grid = problem.grid
    if len(spec.anchor) != grid.dim:
        raise DomainError("barrier and grid dimensions differ")
    phi = _as_time_function(problem.boundary, grid)
    coords = grid.coords()
    d = spec.distance(coords)
    if np.any(d[grid.active] < -1e-9):
        raise DomainError("the anchor ball meets the domain; geometry mismatch")
    zone = grid.active & spec.in_annulus(d)
    u = report.solution.values
    upper = lower = -math.inf
    for k, t in enumerate(grid.times()):
        base = phi(t)
        if not zone.any():
            break
        upper = max(upper, float((u[k] - spec.with_sign(+1).values(base, coords))[zone].max()))
        lower = max(lower, float((spec.with_sign(-1).values(base, coords) - u[k])[zone].max()))
    sup, sub, nodes = _barrier_defects(report, spec)
    measured = max(upper, lower, sup, sub)
    # with no interior node in the annulus the one-step checks say nothing: refine the grid
    return AssertionOutcome(
        "barrier_domination", bool(measured <= tol and nodes > 0), measured, 0.0, tol,
        {"upper_violation": upper, "lower_violation": lower, "supersolution_defect": sup,
         "subsolution_defect": sub, "annulus_nodes": int(zone.sum()), "checked_interior_nodes": nodes,
         "A": spec.A, "B": spec.B, "m": spec.m, "width": spec.width},
    )


# -- exact solutions ------------------------------------------------------------------------------

class ExactFamily(enum.Enum):
    LINEAR = "linear"
    CALORIC = "caloric"
    DEGENERATE_PROFILE = "degenerate_profile"


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form solutions used as oracles.

    * Linear: a.x + b (any gamma, any F).
    * Caloric: x^T Q x + a.x + b + drift t with drift = F(2Q) (gamma = 0).
    * DegenerateProfile: c t + k z^beta + offset with z = x_axis - shift > 0,
      beta = (gamma+2)/(gamma+1); solves u_t = |u_x|^gamma u_xx.
    """

    family: ExactFamily
    dim: int = 1
    a: tuple[float, ...] = ()
    b: float = 0.0
    quad: tuple[tuple[float, ...], ...] = ()
    drift: float = 0.0
    gamma: float = 0.0
    c: float = 1.0
    shift: float = 0.0
    axis: int = 0

    @classmethod
    def linear(cls, a, b: float = 0.0) -> "ExactSolution":
        a = tuple(float(v) for v in np.atleast_1d(a))
        return cls(ExactFamily.LINEAR, len(a), a, float(b))

    @classmethod
    def caloric(cls, quad, a=None, b: float = 0.0, operator: EllipticOperator | None = None) -> "ExactSolution":
        q = np.atleast_2d(np.asarray(quad, float))
        n = q.shape[0]
        q = 0.5 * (q + q.T)
        a = np.zeros(n) if a is None else np.atleast_1d(np.asarray(a, float))
        drift = 2 * float(np.trace(q)) if operator is None else float(evaluate_operator(operator, 2 * q))
        return cls(ExactFamily.CALORIC, n, tuple(a), float(b), tuple(map(tuple, q)), drift)

    @classmethod
    def degenerate_profile(cls, gamma: float, c: float = 1.0, offset: float = 0.0, shift: float = 0.0,
                           dim: int = 1, axis: int = 0) -> "ExactSolution":
        if not gamma > -1:
            raise ValueError("the profile needs gamma > -1")
        if not c > 0:
            raise ValueError("the time slope c must be positive")
        return cls(ExactFamily.DEGENERATE_PROFILE, dim, (), float(offset), (), 0.0, float(gamma), float(c),
                   float(shift), int(axis))

    # -- profile constants
    @property
    def beta(self) -> float:
        return (self.gamma + 2) / (self.gamma + 1)

    @property
    def k(self) -> float:
        g = self.gamma
        return (g + 1) ** (1 / (g + 1)) * (g + 1) / (g + 2) * self.c ** (1 / (g + 1))

    def _z(self, coords, strict: bool) -> np.ndarray:
        z = np.asarray(coords[self.axis], float) - self.shift
        bad = (z <= 0) if strict else (z < -1e-12)
        if np.any(bad):
            raise DomainError("the degenerate profile lives on x > shift")
        return np.maximum(z, 0.0)

    # -- evaluation on coordinate arrays
    def value(self, coords, t):
        coords = [np.asarray(c, float) for c in coords]
        if self.family is ExactFamily.LINEAR:
            return sum(ai * ci for ai, ci in zip(self.a, coords)) + self.b + 0.0 * t
        if self.family is ExactFamily.CALORIC:
            q = self.quad
            out = sum(q[i][j] * coords[i] * coords[j] for i in range(self.dim) for j in range(self.dim))
            return out + sum(ai * ci for ai, ci in zip(self.a, coords)) + self.b + self.drift * t
        z = self._z(coords, strict=False)
        return self.c * t + self.k * z ** self.beta + self.b

    def gradient(self, coords, t):
        coords = [np.asarray(c, float) for c in coords]
        shape = np.broadcast(*coords).shape
        out = np.zeros(shape + (self.dim,))
        if self.family is ExactFamily.LINEAR:
            out[...] = self.a
        elif self.family is ExactFamily.CALORIC:
            q = np.asarray(self.quad)
            for i in range(self.dim):
                out[..., i] = self.a[i] + sum(2 * q[i, j] * coords[j] for j in range(self.dim))
        else:
            z = self._z(coords, strict=False)
            out[..., self.axis] = self.k * self.beta * z ** (1 / (self.gamma + 1))
        return out

    def hessian(self, coords, t):
        coords = [np.asarray(c, float) for c in coords]
        shape = np.broadcast(*coords).shape
        out = np.zeros(shape + (self.dim, self.dim))
        if self.family is ExactFamily.CALORIC:
            out[...] = 2 * np.asarray(self.quad)
        elif self.family is ExactFamily.DEGENERATE_PROFILE:
            z = self._z(coords, strict=True)
            p = 1 / (self.gamma + 1)
            out[..., self.axis, self.axis] = self.k * self.beta * p * z ** (p - 1)
        return out

    def time_derivative(self, coords, t):
        shape = np.broadcast(*[np.asarray(c) for c in coords]).shape
        rate = {ExactFamily.LINEAR: 0.0, ExactFamily.CALORIC: self.drift,
                ExactFamily.DEGENERATE_PROFILE: self.c}[self.family]
        return np.full(shape, rate)

    def boundary(self) -> Callable:
        """``fn(*coords, t)`` for use as Dirichlet data."""
        return lambda *args: self.value(args[:-1], args[-1])

    def residual(self, coords, t, operator: EllipticOperator | None = None) -> np.ndarray:
        """u_t - |Du|^gamma F(D^2 u) with F = trace by default."""
        op = operator or EllipticOperator.linear(np.eye(self.dim))
        p = self.gradient(coords, t)
        g = np.sqrt((p * p).sum(-1)) ** self.gamma if self.gamma else 1.0
        return self.time_derivative(coords, t) - g * evaluate_operator(op, self.hessian(coords, t))


def exact_eval(sol: ExactSolution, X, what: str = "value"):
    """Value, gradient, hessian or time derivative of ``sol`` at X = (x, t)."""
    x, t = X
    coords = tuple(np.atleast_1d(np.asarray(x, float)))
    if len(coords) != sol.dim:
        raise DomainError("point dimension does not match the solution")
    fn = {"value": sol.value, "gradient": sol.gradient, "hessian": sol.hessian,
          "time": sol.time_derivative}.get(what)
    if fn is None:
        raise ValueError(f"unknown evaluation {what!r}")
    out = fn(coords, t)
    return float(out) if np.ndim(out) == 0 else np.asarray(out)


# -- oscillation barriers ----------------------------------------------------------------------------

@dataclass(frozen=True)
class OscBarrier:
    """Upper barrier for osc in time given osc in space <= A.

    gamma >= 0: 2A|x|^2 + 5nA(1+16A^2)^{gamma/2} Lam t - level.
    -1 < gamma < 0: 2A|x|^beta + (Lam(n+beta-2)(2 beta)^{gamma+1} + 1) A^{1+gamma} t - level.
    """

    gamma: float
    A: float
    dim: int
    Lam: float
    level: float = 0.0

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("oscillation amplitude A must be positive")
        if self.gamma < 0 and not self.gamma > -1:
            raise ValueError("the power barrier needs -1 < gamma < 0")

    @property
    def negative_branch(self) -> bool:
        return self.gamma < 0

    @property
    def power(self) -> float:
        return (2 + self.gamma) / (1 + self.gamma) if self.negative_branch else 2.0

    @property
    def slope(self) -> float:
        n, g, A, L = self.dim, self.gamma, self.A, self.Lam
        if not self.negative_branch:
            return 5 * n * A * (1 + 16 * A * A) ** (g / 2) * L
        beta = self.power
        return (L * (n + beta - 2) * (2 * beta) ** (g + 1) + 1) * A ** (1 + g)

    def value(self, coords, t):
        r = np.sqrt(sum(np.asarray(c, float) ** 2 for c in coords))
        return 2 * self.A * r ** self.power + self.slope * t - self.level


def check_osc_barrier(barrier: OscBarrier, operator: EllipticOperator, profile: DegeneracyProfile,
                      grid: Grid, stencil: Stencil | None = None, tol: float = 1e-10,
                      cfl_safety: float = 0.9) -> AssertionOutcome:
    """One explicit step applied to the barrier never rises above the barrier itself."""
    if profile.epsilon >= 1:
        raise ValueError("the oscillation barrier needs 0 < epsilon < 1")
    if operator.Lam > barrier.Lam + 1e-12:
        raise ValueError("operator ellipticity exceeds the barrier's Lambda")
    stencil = stencil or Stencil.wide(grid.dim)
    coords = grid.coords()
    unit = np.sqrt(sum(c * c for c in coords)) <= 1 + GEOM_TOL
    select = grid.interior & unit
    defect = _march_defect(lambda t: barrier.value(coords, t), grid, operator, profile, stencil,
                           cfl_safety, select)
    return AssertionOutcome("osc_barrier_supersolution", bool(defect <= tol), defect, 0.0, tol,
                            {"branch": "negative" if barrier.negative_branch else "nonnegative",
                             "slope": barrier.slope})


# -- a priori estimate assertions ---------------------------------------------------------------------

def _parabolic_boundary(grid: Grid) -> np.ndarray:
    sel = np.zeros(grid.shape, bool)
    sel[0] = grid.active
    sel[1:] = grid.boundary
    return sel


def assert_max_principle(report: SolveReport, tol: float = 1e-12) -> AssertionOutcome:
    """sup over interior |u| <= sup over the parabolic boundary |phi| + tol."""
    grid = report.problem.grid
    u = report.solution.values
    pb = _parabolic_boundary(grid)
    inside = np.zeros(grid.shape, bool)
    inside[1:] = grid.interior
    bound = float(np.abs(u[pb]).max())
    measured = float(np.abs(u[inside]).max()) if inside.any() else 0.0
    details = {"source_free": report.problem.source is None, "monotone": report.problem.stencil.monotone}
    return AssertionOutcome("max_principle", bool(measured <= bound + tol), measured, bound, tol, details)


def _ring(grid: Grid) -> np.ndarray:
    """Interior nodes with at least one non-interior axis neighbour."""
    ring = np.zeros(grid.counts, bool)
    inner = tuple(slice(1, -1) for _ in grid.counts)
    core = np.ones(tuple(c - 2 for c in grid.counts), bool)
    for ax in range(grid.dim):
        for o in (-1, 1):
            off = tuple(o if k == ax else 0 for k in range(grid.dim))
            core &= grid.interior[tuple(slice(1 + v, c - 1 + v) for v, c in zip(off, grid.counts))]
    ring[inner] = grid.interior[inner] & ~core
    return ring


def assert_gradient_max(report: SolveReport, C: float = 1.0, tol: float | None = None) -> AssertionOutcome:
    """Interior sup |D_h u| <= boundary-ring sup |D_h u| + C h^{1/2}.

    The ring is the bottom slice plus interior nodes next to the Dirichlet set.
    """
    grid = report.problem.grid
    tol = C * math.sqrt(grid.h) if tol is None else tol
    u = report.solution.values
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    mags = np.zeros(grid.shape)
    for k in range(grid.steps + 1):
        comps = [(np.roll(u[k], -1, ax) - np.roll(u[k], 1, ax)) / (2 * grid.h) for ax in range(grid.dim)]
        mags[k] = np.sqrt(sum(c * c for c in comps))
    mask_inner = np.zeros(grid.counts, bool)
    mask_inner[inner] = True
    ring = _ring(grid)
    ring_sel = np.zeros(grid.shape, bool)
    ring_sel[0] = grid.interior & mask_inner
    ring_sel[1:] = ring
    core_sel = np.zeros(grid.shape, bool)
    core_sel[1:] = grid.interior & ~ring
    boundary_sup = float(mags[ring_sel].max())
    interior_sup = float(mags[core_sel].max()) if core_sel.any() else 0.0
    excess = interior_sup - boundary_sup
    return AssertionOutcome("gradient_max", bool(excess <= tol), interior_sup, boundary_sup, tol,
                            {"boundary_sup": boundary_sup, "interior_sup": interior_sup, "excess": excess,
                             "h": grid.h})
