"""Finite-difference stencils and the explicit Euler step.

Vectorised routines work on the "inner box" of a slice: every node with a
neighbour on each side (index 1 .. N-2 along each axis). Pointwise helpers
exist for the public per-node API and for tests.

Monotone mode (wide stencil) pairs each linear piece of F with a
nonnegative directional decomposition and evaluates the degeneracy factor on
upwind gradient magnitudes, picking the one whose dependence on neighbour
values has the same sign as F. The update is then nondecreasing in every
neighbour value whenever the controller's bound on dt holds.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import nnls

from .core import DomainError, Grid
from .operators import (
    DegeneracyProfile,
    EllipticOperator,
    OperatorKind,
    degeneracy_of_norm,
    degeneracy_slope,
    evaluate_operator,
    log_sum_exp,
)

__all__ = [
    "HessianKind",
    "GradientMode",
    "Stencil",
    "StepController",
    "StepRejected",
    "NumericalBlowup",
    "discrete_gradient",
    "discrete_hessian",
    "monotone_pucci_plus",
    "gradient_field",
    "hessian_field",
    "directional_differences",
    "operator_field",
    "rhs_field",
    "step",
]


class HessianKind(enum.Enum):
    CENTERED = "centered"
    WIDE = "wide"


class GradientMode(enum.Enum):
    CENTERED = "centered"
    FORWARD = "forward"
    UPWIND = "upwind"


def _axes(dim: int) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(i == k) for i in range(dim)) for k in range(dim))


@dataclass(frozen=True)
class Stencil:
    """CenteredHessian or WideStencil; ``directions`` holds one vector per +/- pair."""

    kind: HessianKind
    directions: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        dirs = tuple(tuple(int(v) for v in d) for d in self.directions)
        object.__setattr__(self, "directions", dirs)
        if self.kind is HessianKind.WIDE:
            if not dirs:
                raise ValueError("a wide stencil needs directions")
            dim = len(dirs[0])
            if any(len(d) != dim for d in dirs) or any(max(abs(v) for v in d) != 1 for d in dirs):
                raise ValueError("directions must be nonzero integer vectors with entries in {-1, 0, 1}")
            for ax in _axes(dim):
                if ax not in dirs and tuple(-v for v in ax) not in dirs:
                    raise ValueError("wide stencil must contain every axis direction")

    @classmethod
    def centered(cls) -> "Stencil":
        return cls(HessianKind.CENTERED)

    @classmethod
    def wide(cls, dim: int) -> "Stencil":
        if dim == 1:
            return cls(HessianKind.WIDE, ((1,),))
        return cls(HessianKind.WIDE, ((1, 0), (0, 1), (1, 1), (1, -1)))

    @property
    def monotone(self) -> bool:
        return self.kind is HessianKind.WIDE

    def axis_directions(self) -> tuple[tuple[int, ...], ...]:
        dim = len(self.directions[0])
        return tuple(d for d in self.directions if sum(abs(v) for v in d) == 1) or _axes(dim)

    def default_gradient(self) -> GradientMode:
        return GradientMode.UPWIND if self.monotone else GradientMode.CENTERED


# -- array helpers ---------------------------------------------------------------

def _inner(ndim: int) -> tuple[slice, ...]:
    return tuple(slice(1, -1) for _ in range(ndim))


def _shift(u: np.ndarray, off) -> np.ndarray:
    """u(x + off h) restricted to the inner box."""
    return u[tuple(slice(1 + o, n - 1 + o) for o, n in zip(off, u.shape))]


def _check_inner(u: np.ndarray):
    if min(u.shape) < 3:
        raise DomainError("slice too small for a 3-point stencil")


# -- gradients -------------------------------------------------------------------

def gradient_field(u: np.ndarray, h: float, mode: GradientMode = GradientMode.CENTERED) -> np.ndarray:
    """Discrete gradient on the inner box, shape (*inner, n)."""
    _check_inner(u)
    comps = []
    for ax in _axes(u.ndim):
        plus = _shift(u, ax)
        if mode is GradientMode.FORWARD:
            comps.append((plus - _shift(u, (0,) * u.ndim)) / h)
        else:
            minus = _shift(u, tuple(-v for v in ax))
            comps.append((plus - minus) / (2 * h))
    return np.stack(comps, axis=-1)


def upwind_norms(u: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """(P_up, P_down): gradient magnitudes nondecreasing / nonincreasing in neighbour values."""
    centre = _shift(u, (0,) * u.ndim)
    up2 = np.zeros_like(centre)
    down2 = np.zeros_like(centre)
    for ax in _axes(u.ndim):
        plus = _shift(u, ax)
        minus = _shift(u, tuple(-v for v in ax))
        up = np.maximum(np.maximum(plus - centre, minus - centre), 0.0) / h
        down = np.maximum(np.maximum(centre - minus, centre - plus), 0.0) / h
        up2 += up * up
        down2 += down * down
    return np.sqrt(up2), np.sqrt(down2)


class Gradient(NamedTuple):
    vector: np.ndarray
    one_sided: bool


def discrete_gradient(u: np.ndarray, point, h: float, mode: GradientMode = GradientMode.CENTERED) -> Gradient:
    """Gradient at one node; falls back to one-sided quotients at the array edge."""
    u = np.asarray(u, float)
    idx = tuple(np.atleast_1d(point))
    out = np.empty(u.ndim)
    one_sided = False
    for k, ax in enumerate(_axes(u.ndim)):
        i = idx[k]
        plus = tuple(a + b for a, b in zip(idx, ax))
        minus = tuple(a - b for a, b in zip(idx, ax))
        has_plus = i + 1 < u.shape[k]
        has_minus = i - 1 >= 0
        if mode is GradientMode.FORWARD and has_plus:
            out[k] = (u[plus] - u[idx]) / h
        elif mode is not GradientMode.FORWARD and has_plus and has_minus:
            out[k] = (u[plus] - u[minus]) / (2 * h)
        elif has_plus:
            out[k] = (u[plus] - u[idx]) / h
            one_sided = True
        elif has_minus:
            out[k] = (u[idx] - u[minus]) / h
            one_sided = True
        else:
            raise DomainError("no neighbour along an axis")
    return Gradient(out, one_sided)


# -- second differences ------------------------------------------------------------

def directional_differences(u: np.ndarray, h: float, directions) -> np.ndarray:
    """(u(x+he) - 2u(x) + u(x-he)) / (h^2 |e|^2) per direction, shape (*inner, D)."""
    _check_inner(u)
    centre = _shift(u, (0,) * u.ndim)
    out = []
    for e in directions:
        e2 = float(sum(v * v for v in e))
        out.append((_shift(u, e) - 2 * centre + _shift(u, tuple(-v for v in e))) / (h * h * e2))
    return np.stack(out, axis=-1)


def hessian_field(u: np.ndarray, h: float, stencil: Stencil | None = None) -> np.ndarray:
    """Discrete Hessian on the inner box, shape (*inner, n, n)."""
    _check_inner(u)
    n = u.ndim
    if stencil is not None and stencil.kind is HessianKind.WIDE:
        dirs = stencil.directions
        delta = directional_differences(u, h, dirs)
        design = _quadratic_design(dirs)
        coef = delta @ np.linalg.pinv(design).T
        return _unpack_sym(coef, n)
    hess = np.empty(tuple(s - 2 for s in u.shape) + (n, n))
    centre = _shift(u, (0,) * n)
    axes = _axes(n)
    for i in range(n):
        ei = axes[i]
        hess[..., i, i] = (_shift(u, ei) - 2 * centre + _shift(u, tuple(-v for v in ei))) / (h * h)
        for j in range(i + 1, n):
            pp = tuple(a + b for a, b in zip(ei, axes[j]))
            pm = tuple(a - b for a, b in zip(ei, axes[j]))
            cross = (_shift(u, pp) - _shift(u, pm) - _shift(u, tuple(-v for v in pm))
                     + _shift(u, tuple(-v for v in pp))) / (4 * h * h)
            hess[..., i, j] = hess[..., j, i] = cross
    return hess


def _quadratic_design(dirs) -> np.ndarray:
    """Rows map the packed upper triangle of M to e^T M e / |e|^2."""
    rows = []
    for e in dirs:
        e = np.asarray(e, float)
        outer = np.outer(e, e) / (e @ e)
        n = len(e)
        rows.append([outer[i, j] * (1 if i == j else 2) for i in range(n) for j in range(i, n)])
    return np.array(rows)


def _unpack_sym(coef: np.ndarray, n: int) -> np.ndarray:
    out = np.empty(coef.shape[:-1] + (n, n))
    k = 0
    for i in range(n):
        for j in range(i, n):
            out[..., i, j] = out[..., j, i] = coef[..., k]
            k += 1
    return out


def _patch(u: np.ndarray, point) -> np.ndarray:
    idx = tuple(np.atleast_1d(point))
    if any(i < 1 or i > s - 2 for i, s in zip(idx, u.shape)):
        raise DomainError("point lacks stencil neighbours (interior-only operation)")
    return u[tuple(slice(i - 1, i + 2) for i in idx)]


def discrete_hessian(u: np.ndarray, point, h: float, stencil: Stencil | None = None) -> np.ndarray:
    patch = _patch(np.asarray(u, float), point)
    return hessian_field(patch, h, stencil).reshape(patch.ndim, patch.ndim)


def _pucci_directional(delta: np.ndarray, lam: float, Lam: float) -> np.ndarray:
    return (Lam * np.clip(delta, 0, None) + lam * np.clip(delta, None, 0)).sum(-1)


def monotone_pucci_plus(u: np.ndarray, point, h: float, directions, lam: float, Lam: float) -> float:
    """sum over directions of Lam (d_e u)^+ + lam (d_e u)^-; monotone in neighbour values."""
    patch = _patch(np.asarray(u, float), point)
    delta = directional_differences(patch, h, directions)
    return float(_pucci_directional(delta, lam, Lam).ravel()[0])


# -- monotone operator discretisation ---------------------------------------------------

@functools.lru_cache(maxsize=128)
def _decompose_cached(key: bytes, n: int, dirs: tuple) -> np.ndarray:
    a = np.frombuffer(key, dtype=float).reshape(n, n)
    design = _quadratic_design(dirs).T  # packed entries of e e^T / |e|^2 per column
    target = np.array([a[i, j] * (1 if i == j else 2) for i in range(n) for j in range(i, n)])
    coef, resid = nnls(design, target)
    if resid > 1e-10 * max(1.0, float(np.abs(a).max())):
        raise ValueError("coefficient matrix is not a nonnegative combination of the stencil directions; widen the stencil")
    return coef


def direction_weights(a: np.ndarray, directions) -> np.ndarray:
    """Nonnegative c_e with A = sum_e c_e e e^T / |e|^2, so tr(AM) = sum_e c_e e^T M e / |e|^2."""
    a = np.ascontiguousarray(a, dtype=float)
    return _decompose_cached(a.tobytes(), a.shape[0], tuple(directions))


def operator_field(op: EllipticOperator, u: np.ndarray, h: float, stencil: Stencil) -> np.ndarray:
    """F_h[u] on the inner box."""
    if op.dim != u.ndim:
        raise ValueError("operator and field dimensions differ")
    if stencil.kind is HessianKind.CENTERED:
        return evaluate_operator(op, hessian_field(u, h))
    if op.kind in (OperatorKind.PUCCI_PLUS, OperatorKind.PUCCI_MINUS):
        delta = directional_differences(u, h, stencil.axis_directions())
        if op.kind is OperatorKind.PUCCI_PLUS:
            return _pucci_directional(delta, op.lam, op.Lam)
        return _pucci_directional(delta, op.Lam, op.lam)
    dirs = stencil.directions
    delta = directional_differences(u, h, dirs)
    linear = np.stack([delta @ direction_weights(a, dirs) for a in op.matrices], axis=-1)
    if op.kind is OperatorKind.LINEAR_TRACE:
        return linear[..., 0]
    s = op.scale
    return (op.theta * log_sum_exp(s * linear / op.theta) - op.offset) / s


# -- right-hand side and step -------------------------------------------------------------

class RhsEval(NamedTuple):
    value: np.ndarray       # g F_h on the inner box (source not included)
    g_max: float            # max of the degeneracy factors in use over the interior
    rate: float             # max over interior of |d rhs / d u_i| bound (1/time)
    grad_max: float         # max gradient magnitude seen over the interior


def rhs_field(u: np.ndarray, grid: Grid, op: EllipticOperator, profile: DegeneracyProfile,
              stencil: Stencil, mode: GradientMode | None = None) -> RhsEval:
    mode = stencil.default_gradient() if mode is None else mode
    h = grid.h
    n = grid.dim
    F = operator_field(op, u, h, stencil)
    mask = grid.interior[_inner(n)]
    if mode is GradientMode.UPWIND:
        p_up, p_down = upwind_norms(u, h)
        # pick the magnitude whose neighbour-dependence matches the sign of F
        if profile.gamma >= 0:
            p_hi, p_lo = p_up, p_down
        else:
            p_hi, p_lo = p_down, p_up
        g_hi = degeneracy_of_norm(profile, np.where(mask, p_hi, 1.0))
        g_lo = degeneracy_of_norm(profile, np.where(mask, p_lo, 1.0))
        Fp = np.clip(F, 0, None)
        Fm = np.clip(F, None, 0)
        value = g_hi * Fp + g_lo * Fm
        slope = np.where(F > 0, degeneracy_slope(profile, p_hi), 0.0) * np.abs(Fp) \
            + np.where(F < 0, degeneracy_slope(profile, p_lo), 0.0) * np.abs(Fm)
        g_use = np.maximum(g_hi, g_lo)
        pnorm = np.maximum(p_hi, p_lo)
    else:
        p = gradient_field(u, h, mode)
        pnorm = np.sqrt((p * p).sum(-1))
        g_use = degeneracy_of_norm(profile, np.where(mask, pnorm, 1.0))
        value = g_use * F
        # no monotonicity claim off the upwind path, so plain CFL
        slope = np.zeros_like(F)
    if not mask.any():
        return RhsEval(value, 0.0, 0.0, 0.0)
    g_max = float(g_use[mask].max())
    lip = 2 * n * op.Lam * g_use / (h * h) + slope * math.sqrt(n) / h
    return RhsEval(value, g_max, float(lip[mask].max()), float(pnorm[mask].max()))


class StepRejected(RuntimeError):
    def __init__(self, dt: float, suggested: float):
        super().__init__(f"time step {dt:.3e} exceeds the stability bound; try {suggested:.3e}")
        self.dt = dt
        self.suggested = suggested


class NumericalBlowup(FloatingPointError):
    pass


@dataclass
class StepController:
    """Stability control for the explicit step.

    The accepted dt never exceeds ``cfl_safety * h^2 / (2 n Lam g_max)``; it is
    further capped so the update keeps a nonnegative weight on the centre node
    when the degeneracy factor moves with the gradient.
    """

    cfl_safety: float = 0.9
    max_grad_guess: float = 0.0
    accepted: int = 0
    rejected: int = 0
    dt_min: float = math.inf
    dt_max: float = 0.0
    g_max: float = 0.0

    def __post_init__(self):
        if not 0 < self.cfl_safety < 1:
            raise ValueError("cfl_safety must lie in (0, 1)")

    def bound(self, ev: RhsEval, grid: Grid, op: EllipticOperator) -> float:
        cfl = math.inf if ev.g_max == 0 else grid.h**2 / (2 * grid.dim * op.Lam * ev.g_max)
        mono = math.inf if ev.rate == 0 else 1.0 / ev.rate
        return self.cfl_safety * min(cfl, mono)

    def record(self, dt: float, ev: RhsEval):
        self.accepted += 1
        self.dt_min = min(self.dt_min, dt)
        self.dt_max = max(self.dt_max, dt)
        self.g_max = max(self.g_max, ev.g_max)
        self.max_grad_guess = max(self.max_grad_guess, ev.grad_max)

    def stats(self) -> dict:
        return {
            "cfl_safety": self.cfl_safety,
            "accepted_steps": self.accepted,
            "rejected_steps": self.rejected,
            "dt_min": self.dt_min if self.accepted else None,
            "dt_max": self.dt_max if self.accepted else None,
            "g_max": self.g_max,
            "max_grad": self.max_grad_guess,
        }

    def fresh(self) -> "StepController":
        return StepController(self.cfl_safety)


def step(u: np.ndarray, grid: Grid, op: EllipticOperator, profile: DegeneracyProfile, stencil: Stencil,
         controller: StepController, dt: float, boundary_next: np.ndarray, source=None,
         mode: GradientMode | None = None, ev: RhsEval | None = None) -> np.ndarray:
    """One forward-Euler step; interior nodes advance, all other nodes take ``boundary_next``."""
    ev = rhs_field(u, grid, op, profile, stencil, mode) if ev is None else ev
    limit = controller.bound(ev, grid, op)
    if dt > limit * (1 + 1e-12):
        controller.rejected += 1
        raise StepRejected(dt, limit)
    inner = _inner(grid.dim)
    new = np.array(boundary_next, dtype=float, copy=True)
    update = ev.value if source is None else ev.value + np.broadcast_to(source, u.shape)[inner]
    mask = grid.interior[inner]
    new_inner = new[inner]
    new_inner[mask] = (u[inner] + dt * update)[mask]
    if not np.all(np.isfinite(new_inner[mask])):
        raise NumericalBlowup("non-finite value after an explicit step")
    controller.record(dt, ev)
    return new
