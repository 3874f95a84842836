"""Dirichlet drivers: one regularized solve, corner compatibility, and the epsilon cascade."""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from .core import Cylinder, DomainError, Grid, SpaceTimeField
from .operators import (
    DegeneracyMode,
    DegeneracyProfile,
    EllipticOperator,
    OperatorKind,
    SingularEvaluationError,
    degeneracy,
    evaluate_operator,
)
from . import _kernels
from .scheme import (
    GradientMode,
    HessianKind,
    NumericalBlowup,
    Stencil,
    StepController,
    StepRejected,
    direction_weights,
    gradient_field,
    rhs_field,
    step,
)

__all__ = [
    "DirichletProblem",
    "SolveReport",
    "CompatibilityReport",
    "CascadeResult",
    "SolveAborted",
    "check_compatibility",
    "solve",
    "solve_cascade",
]

BoundaryFn = Callable[..., np.ndarray]


class SolveAborted(RuntimeError):
    """A march could not be completed (stability retries exhausted or blow-up)."""


def _as_time_function(data, grid: Grid):
    """Return t -> full spatial slice for a callable phi(*coords, t) or a stored field."""
    if data is None:
        return None
    if isinstance(data, SpaceTimeField):
        vals = data.values
        g = data.grid

        def from_field(t):
            s = (t - g.t0) / g.dt
            k = int(min(max(math.floor(s + 1e-9), 0), g.steps))
            if k >= g.steps:
                return vals[g.steps]
            w = s - k
            if abs(w) < 1e-9:
                return vals[k]
            return (1 - w) * vals[k] + w * vals[k + 1]

        return from_field
    coords = grid.coords()
    shape = grid.counts

    def from_callable(t):
        return np.broadcast_to(np.asarray(data(*coords, t), float), shape)

    return from_callable


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    """u_t = g(Du) F(D^2 u) + f in the grid's interior, u = phi on the rest.

    ``boundary`` and ``source`` are callables ``fn(*coords, t)`` or stored fields.
    Either way they are sampled at the grid's time levels; substeps in between
    use linear interpolation of those samples. ``engine="reference"`` runs the
    pure numpy step instead of the compiled kernel (slow, for cross-checks).
    """

    grid: Grid
    operator: EllipticOperator
    profile: DegeneracyProfile
    boundary: BoundaryFn | SpaceTimeField
    source: BoundaryFn | SpaceTimeField | None = None
    stencil: Stencil = field(default_factory=Stencil.centered)
    gradient_mode: GradientMode | None = None
    cfl_safety: float = 0.9
    cylinder: Cylinder | None = None
    max_retries: int = 30
    engine: str = "compiled"

    def __post_init__(self):
        if self.engine not in ("compiled", "reference"):
            raise ValueError("engine must be 'compiled' or 'reference'")
        if self.operator.dim != self.grid.dim:
            raise ValueError("operator and grid dimensions differ")
        if self.stencil.kind.value == "wide" and len(self.stencil.directions[0]) != self.grid.dim:
            raise ValueError("stencil and grid dimensions differ")

    @property
    def mode(self) -> GradientMode:
        return self.gradient_mode or self.stencil.default_gradient()

    def phi(self, t: float) -> np.ndarray:
        return _as_time_function(self.boundary, self.grid)(t)

    def boundary_field(self) -> SpaceTimeField:
        fn = _as_time_function(self.boundary, self.grid)
        return SpaceTimeField(self.grid, np.stack([fn(t) for t in self.grid.times()]))

    def with_profile(self, profile: DegeneracyProfile) -> "DirichletProblem":
        return replace(self, profile=profile)

    def describe(self) -> dict:
        return {
            "grid": self.grid.describe(),
            "operator": self.operator.describe(),
            "gamma": self.profile.gamma,
            "epsilon": self.profile.epsilon,
            "mode": self.profile.mode.value,
            "stencil": self.stencil.kind.value,
            "gradient": self.mode.value,
            "cfl_safety": self.cfl_safety,
        }


@dataclass(frozen=True)
class CompatibilityReport:
    residual: float
    tol: float
    corner_nodes: int

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol


@dataclass(eq=False)
class SolveReport:
    problem: DirichletProblem
    solution: SpaceTimeField
    sup_norm: float
    sup_boundary: float
    sup_gradient: float
    compatibility: CompatibilityReport
    controller: dict
    wall_time: float

    @property
    def compatibility_residual(self) -> float:
        return self.compatibility.residual

    def digest(self) -> dict:
        return {
            "sup_norm": self.sup_norm,
            "sup_boundary": self.sup_boundary,
            "sup_gradient": self.sup_gradient,
            "compatibility_residual": self.compatibility.residual,
            "compatibility_passed": self.compatibility.passed,
            "controller": self.controller,
            "wall_time": self.wall_time,
        }


# -- compatibility ------------------------------------------------------------------------

def _sided(active: np.ndarray, idx: tuple, ax: int) -> str:
    def ok(off):
        j = list(idx)
        j[ax] += off
        return 0 <= j[ax] < active.shape[ax] and active[tuple(j)]

    if ok(-1) and ok(1):
        return "c"
    if ok(1) and ok(2):
        return "f"
    if ok(-1) and ok(-2):
        return "b"
    raise DomainError(f"node {idx} admits no one-sided difference along axis {ax}")


def _d1(u: np.ndarray, idx: tuple, ax: int, h: float, side: str) -> float:
    def at(off):
        j = list(idx)
        j[ax] += off
        return u[tuple(j)]

    if side == "c":
        return (at(1) - at(-1)) / (2 * h)
    if side == "f":
        return (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h)
    return (3 * at(0) - 4 * at(-1) + at(-2)) / (2 * h)


def _d2(u: np.ndarray, idx: tuple, ax: int, h: float, side: str) -> float:
    def at(off):
        j = list(idx)
        j[ax] += off
        return u[tuple(j)]

    if side == "c":
        return (at(1) - 2 * at(0) + at(-1)) / (h * h)
    if side == "f":
        return (at(0) - 2 * at(1) + at(2)) / (h * h)
    return (at(0) - 2 * at(-1) + at(-2)) / (h * h)


def _cross(u: np.ndarray, idx: tuple, i: int, j: int, h: float, si: str, sj: str) -> float:
    offs = {"c": (-1, 1), "f": (0, 1, 2), "b": (-2, -1, 0)}[si]
    # d/dx_j at the nodes that the x_i difference uses, then difference those along x_i
    line = np.zeros(3)
    for k, o in enumerate(offs):
        node = list(idx)
        node[i] += o
        line[k] = _d1(u, tuple(node), j, h, sj)
    if si == "c":
        return (line[1] - line[0]) / (2 * h)
    if si == "f":
        return (-3 * line[0] + 4 * line[1] - line[2]) / (2 * h)
    return (3 * line[2] - 4 * line[1] + line[0]) / (2 * h)


def check_compatibility(problem: DirichletProblem, tol: float = 1e-6) -> CompatibilityReport:
    """max over corner nodes of |phi_t - g(D phi) F(D^2 phi)| with one-sided differences."""
    grid = problem.grid
    phi = _as_time_function(problem.boundary, grid)
    p0 = np.asarray(phi(grid.t0), float)
    p1 = np.asarray(phi(grid.t0 + grid.dt), float)
    phi_t = (p1 - p0) / grid.dt
    corners = np.argwhere(grid.boundary)
    # phi is known on the whole bounding box, so differences may leave the mask
    everywhere = np.ones(grid.counts, bool)
    n = grid.dim
    worst = 0.0
    for node in corners:
        idx = tuple(int(v) for v in node)
        sides = [_sided(everywhere, idx, ax) for ax in range(n)]
        grad = np.array([_d1(p0, idx, ax, grid.h, sides[ax]) for ax in range(n)])
        hess = np.empty((n, n))
        for i in range(n):
            hess[i, i] = _d2(p0, idx, i, grid.h, sides[i])
            for j in range(i + 1, n):
                hess[i, j] = hess[j, i] = _cross(p0, idx, i, j, grid.h, sides[i], sides[j])
        try:
            g = float(degeneracy(problem.profile, grad))
        except SingularEvaluationError:
            g = float(degeneracy(problem.profile.regularized(1e-12), grad))
        resid = abs(phi_t[idx] - g * float(evaluate_operator(problem.operator, hess)))
        worst = max(worst, resid)
    return CompatibilityReport(worst, tol, len(corners))


# -- single solve -----------------------------------------------------------------------------

def solve(problem: DirichletProblem, compat_tol: float = 1e-6) -> SolveReport:
    """March from the bottom slice to the final time with boundary nodes pinned to phi."""
    if problem.profile.mode is not DegeneracyMode.REGULARIZED:
        raise ValueError("direct solves need a regularized profile; use solve_cascade for |Du|^gamma")
    if not problem.operator.is_smooth:
        warnings.warn("Pucci operators are not C^{1,1}; use them for bounds, not as the solved operator",
                      stacklevel=2)
    start = time.perf_counter()
    grid = problem.grid
    phi = _as_time_function(problem.boundary, grid)
    src = _as_time_function(problem.source, grid)
    times = grid.times()
    out = np.empty(grid.shape)
    levels = [np.array(phi(t), dtype=float) for t in times]
    sources = None if src is None else [np.array(src(t), dtype=float) for t in times]
    out[0] = levels[0]
    if problem.engine == "compiled":
        stats = _march_compiled(problem, out, levels, sources)
    else:
        stats = _march_reference(problem, out, levels, sources)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowup("non-finite solution values")
    solution = SpaceTimeField(grid, out)
    boundary_nodes = np.zeros(grid.shape, bool)
    boundary_nodes[0] = grid.active
    boundary_nodes[1:] = grid.boundary
    grad = gradient_field_series(out, grid)
    if grad.size:
        stats["max_grad"] = max(stats["max_grad"], float(grad.max()))
    return SolveReport(
        problem=problem,
        solution=solution,
        sup_norm=float(np.abs(out[:, grid.active]).max()),
        sup_boundary=float(np.abs(out[boundary_nodes]).max()),
        sup_gradient=float(grad.max()) if grad.size else 0.0,
        compatibility=check_compatibility(problem, compat_tol),
        controller=stats,
        wall_time=time.perf_counter() - start,
    )


def _march_reference(problem: DirichletProblem, out, levels, sources) -> dict:
    grid = problem.grid
    controller = StepController(problem.cfl_safety)
    op, prof, sten, mode = problem.operator, problem.profile, problem.stencil, problem.mode
    u = out[0].copy()
    for k in range(grid.steps):
        span = grid.dt
        t = 0.0
        while t < span:
            w = t / span
            source = None if sources is None else (1 - w) * sources[k] + w * sources[k + 1]
            ev = rhs_field(u, grid, op, prof, sten, mode)
            limit = controller.bound(ev, grid, op)
            if not limit > 0:
                raise SolveAborted(f"stability bound collapsed at level {k}")
            remaining = span - t
            nsub = 1 if limit >= remaining else max(1, math.ceil(remaining / limit * (1 - 1e-12)))
            t_next = span if nsub == 1 else t + remaining / nsub
            wn = t_next / span
            bnext = levels[k + 1] if nsub == 1 else (1 - wn) * levels[k] + wn * levels[k + 1]
            try:
                u = step(u, grid, op, prof, sten, controller, t_next - t, bnext, source, mode, ev)
            except StepRejected as exc:  # pragma: no cover - the bound is computed from ev itself
                raise SolveAborted(str(exc)) from exc
            t = t_next
        out[k + 1] = u
    return controller.stats()


_KIND_CODES = {
    OperatorKind.PUCCI_PLUS: _kernels.PUCCI_PLUS,
    OperatorKind.PUCCI_MINUS: _kernels.PUCCI_MINUS,
    OperatorKind.LINEAR_TRACE: _kernels.LINEAR,
    OperatorKind.SMOOTH_BELLMAN: _kernels.BELLMAN,
}
_MODE_CODES = {
    GradientMode.CENTERED: _kernels.CENTERED,
    GradientMode.FORWARD: _kernels.FORWARD,
    GradientMode.UPWIND: _kernels.UPWIND,
}


def kernel_arguments(problem: DirichletProblem) -> dict:
    """Flattened stencil offsets and operator data for the compiled march."""
    grid, op, sten = problem.grid, problem.operator, problem.stencil
    n = grid.dim
    strides = [int(np.prod(grid.counts[k + 1:])) for k in range(n)]
    ax_off = np.array(strides, dtype=np.int64)
    wide = sten.kind is HessianKind.WIDE
    dirs = sten.directions if wide else ()
    dirs_off = np.array([sum(e[k] * strides[k] for k in range(n)) for e in dirs], dtype=np.int64)
    dirs_e2 = np.array([float(sum(v * v for v in e)) for e in dirs])
    is_axis = np.array([sum(abs(v) for v in e) == 1 for e in dirs], dtype=np.bool_)
    if wide and op.matrices:
        weights = np.stack([direction_weights(a, dirs) for a in op.matrices])
    else:
        weights = np.zeros((1, max(len(dirs), 1)))
    mats = np.stack(op.matrices) if op.matrices else np.zeros((1, n, n))
    prof = problem.profile
    return dict(
        h=float(grid.h), dim=n, ax_off=ax_off,
        off_pp=int(strides[0] + strides[1]) if n == 2 else 0,
        off_pm=int(strides[0] - strides[1]) if n == 2 else 0,
        kind=_KIND_CODES[op.kind], wide=wide, dirs_off=dirs_off, dirs_e2=dirs_e2, is_axis=is_axis,
        weights=np.ascontiguousarray(weights, dtype=float), mats=np.ascontiguousarray(mats, dtype=float),
        lam=float(op.lam), Lam=float(op.Lam), theta=float(op.theta or 1.0), scale=float(op.scale),
        offset=float(op.offset), gmode=_MODE_CODES[problem.mode], gamma=float(prof.gamma),
        eps2=float(prof.epsilon**2), safety=float(problem.cfl_safety),
    )


def linear_stencil(args: dict) -> tuple[np.ndarray, np.ndarray]:
    """Flat offsets and weights of F_h for a linear operator: F_h[u](i) = sum_c w_c u[i + off_c]."""
    h2 = args["h"] ** 2
    coef: dict[int, float] = {}

    def add(off, w):
        coef[off] = coef.get(off, 0.0) + w

    if args["wide"]:
        for o, e2, w in zip(args["dirs_off"], args["dirs_e2"], args["weights"][0]):
            for off, sgn in ((int(o), 1.0), (0, -2.0), (-int(o), 1.0)):
                add(off, sgn * w / (h2 * e2))
    else:
        a = args["mats"][0]
        for k, o in enumerate(args["ax_off"][:args["dim"]]):
            for off, sgn in ((int(o), 1.0), (0, -2.0), (-int(o), 1.0)):
                add(off, sgn * a[k, k] / h2)
        if args["dim"] == 2:
            pp, pm = args["off_pp"], args["off_pm"]
            for off, sgn in ((pp, 1.0), (pm, -1.0), (-pm, -1.0), (-pp, 1.0)):
                add(off, sgn * 2.0 * a[0, 1] / (4.0 * h2))
    offs = np.array(sorted(coef), dtype=np.int64)
    return offs, np.array([coef[o] for o in offs])


def _march_compiled(problem: DirichletProblem, out, levels, sources) -> dict:
    grid = problem.grid
    if not 0 < problem.cfl_safety < 1:
        raise ValueError("cfl_safety must lie in (0, 1)")
    args = kernel_arguments(problem)
    # g == 1 with a linear operator: fixed stencil, fixed step
    fixed = args["gamma"] == 0.0 and problem.operator.kind is OperatorKind.LINEAR_TRACE
    if fixed:
        offs, coefs = linear_stencil(args)
        rate = 2.0 * grid.dim * args["Lam"] / args["h"] ** 2
    interior = np.flatnonzero(grid.interior.ravel()).astype(np.int64)
    others = np.flatnonzero(~grid.interior.ravel()).astype(np.int64)
    stats = np.array([0.0, math.inf, 0.0, 0.0, 0.0])
    u = out[0].ravel().copy()
    zero = np.zeros(1)
    for k in range(grid.steps):
        f0 = zero if sources is None else sources[k].ravel()
        f1 = zero if sources is None else sources[k + 1].ravel()
        if fixed:
            status = _kernels.march_linear_interval(
                u, levels[k].ravel(), levels[k + 1].ravel(), f0, f1, sources is not None,
                interior, others, float(grid.dt), offs, coefs, rate, args["safety"], stats)
        else:
            status = _kernels.march_interval(
                u, levels[k].ravel(), levels[k + 1].ravel(), f0, f1, sources is not None,
                interior, others, float(grid.dt), stats=stats, **args)
        if status == _kernels.NONFINITE:
            raise NumericalBlowup(f"non-finite value while marching level {k}")
        if status == _kernels.STALLED:
            raise SolveAborted(f"stability bound collapsed at level {k}")
        out[k + 1] = u.reshape(grid.counts)
    done = int(stats[0])
    return {
        "cfl_safety": problem.cfl_safety,
        "accepted_steps": done,
        "rejected_steps": 0,
        "dt_min": float(stats[1]) if done else None,
        "dt_max": float(stats[2]) if done else None,
        "g_max": float(stats[3]),
        "max_grad": float(stats[4]),
    }


def gradient_field_series(values: np.ndarray, grid: Grid) -> np.ndarray:
    """|centered gradient| at interior nodes of every slice, flattened."""
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    mask = grid.interior[inner]
    mags = []
    for sl in values:
        p = gradient_field(sl, grid.h, GradientMode.CENTERED)
        mags.append(np.sqrt((p * p).sum(-1))[mask])
    return np.concatenate(mags) if mags else np.empty(0)


# -- cascade --------------------------------------------------------------------------------------

@dataclass(eq=False)
class CascadeResult:
    epsilons: list[float]
    thetas: list[float | None]
    reports: list[SolveReport | None]
    errors: list[str | None]
    distances: np.ndarray
    measurements: list[Any]
    gamma: float

    @property
    def solutions(self) -> list[SpaceTimeField | None]:
        return [r.solution if r is not None else None for r in self.reports]

    @property
    def within_main_hypothesis(self) -> bool:
        """Interior regularity is claimed for gamma > -1 only; solvability for gamma > -2."""
        return self.gamma > -1

    def consecutive_distances(self) -> list[float]:
        return [float(self.distances[i, i + 1]) for i in range(len(self.epsilons) - 1)]

    def digest(self) -> dict:
        return {
            "gamma": self.gamma,
            "epsilons": self.epsilons,
            "thetas": self.thetas,
            "errors": self.errors,
            "distances": [[None if math.isnan(v) else v for v in row] for row in self.distances.tolist()],
            "within_main_hypothesis": self.within_main_hypothesis,
            "members": [r.digest() if r is not None else None for r in self.reports],
        }


def solve_cascade(problem: DirichletProblem, epsilons: Sequence[float],
                  thetas: Sequence[float] | None = None,
                  measure: Callable[[SolveReport], Any] | None = None,
                  workers: int = 1) -> CascadeResult:
    """Solve the regularized problem for each epsilon (decreasing) on identical data."""
    eps = [float(e) for e in epsilons]
    if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be positive and strictly decreasing")
    gamma = problem.profile.gamma
    if gamma <= -2:
        raise ValueError("the regularized Dirichlet problem needs gamma > -2")
    if thetas is not None and len(thetas) != len(eps):
        raise ValueError("one smoothing temperature per epsilon")
    theta_list: list[float | None] = list(thetas) if thetas is not None else [None] * len(eps)

    def run(i: int):
        op = problem.operator
        if theta_list[i] is not None and op.kind is OperatorKind.SMOOTH_BELLMAN:
            op = op.with_theta(theta_list[i])
        member = replace(problem, operator=op, profile=problem.profile.regularized(eps[i]))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rep = solve(member)
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            return None, f"epsilon={eps[i]}: {type(exc).__name__}: {exc}", None
        meas = None
        if measure is not None:
            try:
                meas = measure(rep)
            except (ValueError, ArithmeticError) as exc:
                meas = f"{type(exc).__name__}: {exc}"
        return rep, None, meas

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(len(eps))))
    else:
        results = [run(i) for i in range(len(eps))]
    reports = [r[0] for r in results]
    k = len(eps)
    dist = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(k):
            if reports[i] is not None and reports[j] is not None:
                dist[i, j] = float(np.abs(reports[i].solution.values - reports[j].solution.values).max())
    return CascadeResult(eps, theta_list, reports, [r[1] for r in results], dist,
                         [r[2] for r in results], gamma)
