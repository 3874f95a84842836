"""Regularity measurements: difference quotients, oscillation decay fits,
time moduli, density fractions and the gradient dichotomy trace."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Cylinder, DomainError, Grid, SpaceTimeField, atomic_write, region_mask

__all__ = [
    "FlatField",
    "QuotientField",
    "OscillationFit",
    "TimeFit",
    "DichotomyParams",
    "DichotomyTrace",
    "RegularityReport",
    "UniformityVerdict",
    "difference_quotient_field",
    "gradient_series",
    "fit_oscillation_decay",
    "fit_time_modulus",
    "fit_gradient_time_modulus",
    "dyadic_radii",
    "nested",
    "unit_ball_volume",
    "predicted_time_exponent",
    "density_check",
    "sample_directions",
    "dichotomy_iterate",
    "unit_gradient_scale",
    "UnitRescaling",
    "rescale_to_unit_gradient",
    "measure_regularity",
    "measure_uniform_holder",
    "oscillation_csv",
    "dichotomy_csv",
    "write_oscillation_csv",
    "write_dichotomy_csv",
]

FLAT_FACTOR = 10.0 * np.finfo(float).eps
CSV_EOL = "\r\n"


class FlatField(ArithmeticError):
    """Oscillations or increments too small to take logarithms of."""


def _flat_threshold(scale: float) -> float:
    return FLAT_FACTOR * max(1.0, scale)


# -- gradient fields ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuotientField:
    """Forward difference quotients u_k^h and v^h = sum_k (u_k^h)^2.

    ``components`` has shape (nt, *counts, dim); nodes without a forward
    neighbour at distance h hold NaN.
    """

    grid: Grid
    h: float
    components: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)


def difference_quotient_field(u: SpaceTimeField, h: float) -> QuotientField:
    grid = u.grid
    ratio = h / grid.h
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise DomainError(f"quotient step {h} is not a multiple of the grid spacing {grid.h}")
    vals = u.values
    comps = np.full(vals.shape + (grid.dim,), np.nan)
    for ax in range(grid.dim):
        n = grid.counts[ax]
        if k >= n:
            raise DomainError("quotient step exceeds the grid extent")
        lo = [slice(None)] * vals.ndim
        hi = [slice(None)] * vals.ndim
        lo[ax + 1] = slice(0, n - k)
        hi[ax + 1] = slice(k, n)
        diff = (vals[tuple(hi)] - vals[tuple(lo)]) / h
        # only pairs of active nodes count
        ok = grid.active[tuple(lo[1:])] & grid.active[tuple(hi[1:])]
        comps[tuple(lo) + (ax,)] = np.where(ok[None], diff, np.nan)
    v = (comps**2).sum(-1)
    return QuotientField(grid, float(h), comps, v)


def gradient_series(u: SpaceTimeField) -> np.ndarray:
    """Du at every node, shape (nt, *counts, dim); second order, one-sided at edges.

    Nodes outside the active set hold NaN.
    """
    grid = u.grid
    axes = tuple(range(1, grid.dim + 1))
    parts = np.gradient(u.values, grid.h, axis=axes, edge_order=2)
    if grid.dim == 1:
        parts = [parts]
    du = np.stack(parts, axis=-1)
    du[:, ~grid.active] = np.nan
    return du


# -- spatial oscillation decay -------------------------------------------------------

@dataclass(frozen=True)
class OscillationFit:
    """log(sum_k osc D_k u over Q_r) against log r: slope alpha, intercept log C."""

    alpha: float
    C: float
    residual: float
    radii: tuple[float, ...]
    oscillations: tuple[tuple[float, ...], ...]  # per radius, per component
    center: tuple[float, ...]
    s: float
    gamma: float

    def __iter__(self):
        return iter((self.alpha, self.C, self.residual))

    def totals(self) -> list[float]:
        return [float(sum(row)) for row in self.oscillations]


def dyadic_radii(r0: float, count: int = 6) -> list[float]:
    return [r0 * 2.0**-i for i in range(count)]


def _check_inside(grid: Grid, region: Cylinder) -> None:
    tol = 1e-9 * max(1.0, region.radius)
    for c, lo, hi in zip(region.center, grid.lower, grid.upper):
        if c - region.radius < lo - tol or c + region.radius > hi + tol:
            raise DomainError(f"cylinder of radius {region.radius} leaves the grid box")
    if grid.active is not None and not grid.active.all():
        dist = np.sqrt(sum((x - c) ** 2 for x, c in zip(grid.coords(), region.center)))
        if np.any((dist <= region.radius - tol) & ~grid.active):
            raise DomainError(f"cylinder of radius {region.radius} leaves the active domain")
    # a single stored level is a stationary field: no time extent to check
    if grid.steps and (region.t_bottom < grid.t0 - 1e-9 or region.s > grid.t1 + 1e-9):
        raise DomainError(f"cylinder of radius {region.radius} leaves the time range")


def _osc_components(du: np.ndarray, grid: Grid, region: Cylinder) -> tuple[float, ...]:
    if grid.steps:
        sel = region_mask(grid, region)
    else:
        sel = region_mask(grid, Cylinder(region.center, grid.t0, region.radius))
    out = []
    for k in range(du.shape[-1]):
        picked = du[..., k][sel]
        picked = picked[np.isfinite(picked)]
        if picked.size == 0:
            raise DomainError(f"cylinder of radius {region.radius} contains no grid node")
        out.append(float(picked.max() - picked.min()))
    return tuple(out)


def _loglog_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    lx, ly = np.log(np.asarray(x)), np.log(np.asarray(y))
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = float(np.abs(ly - (slope * lx + intercept)).max())
    return float(slope), float(intercept), residual


def fit_oscillation_decay(du: np.ndarray, grid: Grid, center, s: float | None = None,
                          radii: Sequence[float] | None = None, gamma: float = 0.0,
                          r0: float = 0.5, clip: bool = False,
                          flat_tol: float | None = None) -> OscillationFit:
    """Fit sum_k osc_{Q_r(Y)} D_k u ~ C r^alpha over dyadic radii.

    ``du`` is (nt, *counts, dim). Cylinders are the standard Q_r(Y) with top at
    ``s`` (default: last level). With ``clip`` the cylinders may stick out of
    the grid and are intersected with it. ``gamma`` is carried into the result.
    Totals below ``flat_tol`` (default 10 eps max(1, sup|Du|)) raise FlatField.
    """
    radii = list(dyadic_radii(r0) if radii is None else radii)
    if len(radii) < 4:
        raise ValueError("need at least 4 radii")
    s = grid.t1 if s is None else float(s)
    center = tuple(float(c) for c in np.atleast_1d(center))
    if min(radii) < grid.h * (1 - 1e-9):
        raise DomainError(f"radius {min(radii):.4g} is below the grid spacing {grid.h:.4g}")
    rows = []
    for r in radii:
        region = Cylinder(center, s, r)
        if not clip:
            _check_inside(grid, region)
        rows.append(_osc_components(du, grid, region))
    totals = [sum(row) for row in rows]
    if flat_tol is None:
        flat_tol = _flat_threshold(float(np.nanmax(np.abs(du))) if np.isfinite(du).any() else 0.0)
    if min(totals) < flat_tol:
        raise FlatField(f"oscillation {min(totals):.3e} is at round-off level")
    alpha, logc, residual = _loglog_fit(radii, totals)
    return OscillationFit(alpha, math.exp(logc), residual, tuple(radii), tuple(rows), center, s, float(gamma))


# -- time modulus ---------------------------------------------------------------------

def predicted_time_exponent(alpha: float, gamma: float) -> float:
    """(1 + alpha) / (2 - alpha gamma)."""
    denom = 2.0 - alpha * gamma
    if not denom > 0:
        raise ValueError("2 - alpha*gamma must be positive")
    return (1.0 + alpha) / denom


@dataclass(frozen=True)
class TimeFit:
    exponent: float
    predicted: float | None
    C: float
    residual: float
    lags: tuple[float, ...]
    increments: tuple[float, ...]

    def __iter__(self):
        return iter((self.exponent, self.predicted))


def _node_index(grid: Grid, point) -> tuple[int, ...]:
    x = np.atleast_1d(np.asarray(point, float))
    idx = tuple(int(round((xi - lo) / grid.h)) for xi, lo in zip(x, grid.lower))
    if any(i < 0 or i >= c for i, c in zip(idx, grid.counts)):
        raise DomainError(f"point {tuple(x)} lies outside the grid")
    return idx


def _dyadic_lags(steps: int, min_lags: int) -> list[int]:
    lags = []
    L = 1
    while L <= steps // 2 or (L <= steps and len(lags) < min_lags):
        lags.append(L)
        L *= 2
    if len(lags) < min_lags:
        raise DomainError(f"need at least {min_lags} dyadic time lags, the grid has {steps} steps")
    return lags


def _time_fit(series: np.ndarray, grid: Grid, predicted: float | None, min_lags: int) -> TimeFit:
    """series: (nt, m) values at one node (m components); sup increments per dyadic lag."""
    lags = _dyadic_lags(grid.steps, min_lags)
    incs = [float(np.abs(series[L:] - series[:-L]).max()) for L in lags]
    scale = float(np.abs(series).max())
    if min(incs) < _flat_threshold(scale):
        raise FlatField("time increments are at round-off level")
    times = [L * grid.dt for L in lags]
    slope, logc, residual = _loglog_fit(times, incs)
    return TimeFit(slope, predicted, math.exp(logc), residual, tuple(times), tuple(incs))


def fit_time_modulus(u: SpaceTimeField, point, gamma: float, alpha_space: float | None = None,
                     min_lags: int = 4) -> TimeFit:
    """Log-log fit of sup_t |u(x, t + L dt) - u(x, t)| against the lag, at an interior node."""
    grid = u.grid
    idx = _node_index(grid, point)
    if not grid.interior[idx]:
        raise DomainError("time modulus needs an interior point")
    predicted = None if alpha_space is None else predicted_time_exponent(alpha_space, gamma)
    return _time_fit(u.values[(slice(None),) + idx][:, None], grid, predicted, min_lags)


def fit_gradient_time_modulus(du: np.ndarray, grid: Grid, point, gamma: float,
                              alpha_space: float | None = None, min_lags: int = 4) -> TimeFit:
    """Same fit for Du (sup over components); predicted alpha / (2 - alpha gamma)."""
    idx = _node_index(grid, point)
    if not grid.interior[idx]:
        raise DomainError("time modulus needs an interior point")
    predicted = None
    if alpha_space is not None:
        predicted = alpha_space / (2.0 - alpha_space * gamma)
    return _time_fit(du[(slice(None),) + idx], grid, predicted, min_lags)


# -- density and the dichotomy ------------------------------------------------------------

def density_check(du: np.ndarray, grid: Grid, e, level: float, region: Cylinder) -> float:
    """Fraction of grid nodes of ``region`` with Du . e <= level."""
    e = np.asarray(e, float)
    if abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    sel = region_mask(grid, region)
    proj = du[sel] @ e
    proj = proj[np.isfinite(proj)]
    if proj.size == 0:
        raise DomainError("region contains no grid node")
    return float(np.count_nonzero(proj <= level)) / proj.size


def sample_directions(dim: int, angles: int = 16) -> np.ndarray:
    """All +-axis directions, plus ``angles`` evenly spaced planar angles when dim = 2."""
    dirs = []
    for k in range(dim):
        for sgn in (1.0, -1.0):
            e = np.zeros(dim)
            e[k] = sgn
            dirs.append(e)
    if dim == 2:
        for j in range(angles):
            a = 2.0 * math.pi * j / angles
            dirs.append(np.array([math.cos(a), math.sin(a)]))
    return np.array(dirs)


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


@dataclass(frozen=True)
class DichotomyParams:
    l: float = 0.75
    mu: float = 0.01
    delta: float = 0.1
    tau: float = 0.25
    eps0: float = 0.1
    eps1: float | None = None  # None means 0.01 |Q_1|
    eta: float = 0.05

    def __post_init__(self):
        if not 0.5 < self.l < 1.0:
            raise ValueError("l must lie in (1/2, 1)")
        for name in ("mu", "delta", "tau", "eps0", "eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.eps1 is not None and not self.eps1 > 0:
            raise ValueError("eps1 must be positive")
        if not self.delta < 1:
            raise ValueError("delta must be below 1")

    def tau_bound(self, gamma: float) -> float:
        return min(1.0 - self.delta, (1.0 - self.delta) ** (1.0 + gamma))

    def check_tau(self, gamma: float) -> None:
        """cond:tau, which nests the intrinsic cylinders."""
        bound = self.tau_bound(gamma)
        if not self.tau < bound:
            raise ValueError(f"cond:tau violated: tau={self.tau} >= min(1-delta, (1-delta)^(1+gamma))={bound:.6g}")

    @classmethod
    def from_theorem(cls, dim: int, eps0: float = 0.1, eps1: float | None = None, eta: float = 0.05,
                     delta: float = 0.1, tau: float = 0.25) -> "DichotomyParams":
        """l = 1 - eps0^2/2 and mu = eps1/|Q_1|."""
        q1 = unit_ball_volume(dim)
        e1 = 0.01 * q1 if eps1 is None else eps1
        return cls(1.0 - 0.5 * eps0**2, e1 / q1, delta, tau, eps0, eps1, eta)

    def eps1_value(self, dim: int) -> float:
        return 0.01 * unit_ball_volume(dim) if self.eps1 is None else self.eps1


def nested(params: DichotomyParams, gamma: float, levels: int = 8, dim: int = 1) -> bool:
    """Check Q_{tau^(i+1)}^{(1-delta)^(i+1)} inside Q_{tau^i}^{(1-delta)^i} for i < levels."""
    zero = (0.0,) * dim
    q = 1.0 - params.delta
    cyl = [Cylinder.intrinsic(zero, 0.0, params.tau**i, q**i, gamma) for i in range(levels + 1)]
    return all(a.contains(b) for a, b in zip(cyl, cyl[1:]))


@dataclass(frozen=True)
class DichotomyRow:
    level: int
    direction_index: int
    fraction: float
    condition_held: bool
    sup_grad_next: float


@dataclass
class DichotomyTrace:
    rows: list[DichotomyRow]
    levels: list[dict]
    m1: float
    m2: int | None
    stop_reason: str
    tol: float

    @property
    def m(self) -> float:
        return self.m1 if self.m2 is None else min(self.m1, self.m2)

    @property
    def consistent(self) -> bool:
        """Every level where the condition held shrank the gradient as claimed."""
        return all(lv["implication"] is not False for lv in self.levels)

    def checked_levels(self) -> int:
        return sum(lv["implication"] is not None for lv in self.levels)

    def digest(self) -> dict:
        return {"m1": self.m1, "m2": self.m2, "m": self.m, "stop_reason": self.stop_reason,
                "consistent": self.consistent, "levels": self.levels}


def unit_gradient_scale(du: np.ndarray, grid: Grid, region: Cylinder) -> float:
    """sup |Du| over the region: dividing u by it gives sup |Du| = 1 there."""
    sel = region_mask(grid, region)
    mags = np.sqrt((du[sel] ** 2).sum(-1))
    return float(np.nanmax(mags))


@dataclass(frozen=True)
class UnitRescaling:
    """u -> u(x, M^-gamma t) / M with M = sup |Du| on Q_1.

    The rescaled function solves the same kind of equation with epsilon / M and
    the operator X -> F(M X) / M, so one rescaled time unit is M^-gamma grid time.
    """

    M: float
    time_unit: float
    epsilon: float


def rescale_to_unit_gradient(du: np.ndarray, grid: Grid, gamma: float, epsilon: float,
                             center=None, s: float | None = None) -> tuple[np.ndarray, UnitRescaling]:
    dim = grid.dim
    center = (0.0,) * dim if center is None else tuple(float(c) for c in np.atleast_1d(center))
    s = grid.t1 if s is None else float(s)
    M = unit_gradient_scale(du, grid, Cylinder(center, s, 1.0))
    if not M > 0:
        raise FlatField("the gradient vanishes on Q_1")
    # Q_1 of the rescaled function spans M^-gamma grid time, which depends on M:
    # raise M until the sup over its own cylinder no longer exceeds it
    for _ in range(64):
        found = unit_gradient_scale(du, grid, Cylinder(center, s, 1.0, M ** (-gamma)))
        if found <= M:
            break
        M = found
    return du / M, UnitRescaling(M, M ** (-gamma), epsilon / M)


def dichotomy_iterate(du: np.ndarray, grid: Grid, params: DichotomyParams, gamma: float,
                      epsilon: float, center=None, s: float | None = None, angles: int = 16,
                      tol: float | None = None, min_nodes: int = 8, time_unit: float = 1.0,
                      max_levels: int = 64) -> DichotomyTrace:
    """Walk the intrinsic cylinders Q_{tau^i}^{(1-delta)^i} from the top point (center, s).

    ``du`` must already satisfy sup |Du| <= 1 on Q_1. ``time_unit`` converts
    the rescaled time of a rescaled solution back to grid time. The walk stops at
    the first level where the measure condition fails (m2), at
    m1 = floor(log eps / log(1 - delta)), or when a cylinder holds fewer than
    ``min_nodes`` nodes. ``tol`` defaults to 2h.
    """
    params.check_tau(gamma)
    dim = grid.dim
    center = (0.0,) * dim if center is None else tuple(float(c) for c in np.atleast_1d(center))
    s = grid.t1 if s is None else float(s)
    tol = 2.0 * grid.h if tol is None else float(tol)
    q = 1.0 - params.delta

    def cylinder(i):
        c = Cylinder.intrinsic(center, s, params.tau**i, q**i, gamma)
        return Cylinder(center, s, c.radius, c.time_stretch * time_unit)

    def nodes(i):
        return region_mask(grid, cylinder(i))

    top = nodes(0)
    if np.any(top):
        sup0 = float(np.nanmax(np.sqrt((du[top] ** 2).sum(-1))))
        if sup0 > 1.0 + 1e-12:
            raise DomainError(f"dichotomy needs sup|Du| <= 1 on Q_1, got {sup0:.6g}; rescale first")
    m1 = math.floor(math.log(epsilon) / math.log(q)) if epsilon > 0 else math.inf
    dirs = sample_directions(dim, angles)
    rows: list[DichotomyRow] = []
    levels: list[dict] = []
    m2 = None
    reason = "m1"
    i = 0
    while i <= min(m1, max_levels):
        sel = nodes(i)
        if np.count_nonzero(sel) < min_nodes:
            reason = "resolution"
            break
        level = params.l * q**i
        cyl = cylinder(i)
        fracs = [density_check(du, grid, e, level, cyl) for e in dirs]
        held = all(f > params.mu for f in fracs)
        sup_next = math.nan
        implication = None
        if held:
            nxt = nodes(i + 1)
            if np.count_nonzero(nxt) >= 1:
                mags = np.sqrt((du[nxt] ** 2).sum(-1))
                sup_next = float(np.nanmax(mags))
                implication = sup_next < q ** (i + 1) + tol
        for d, f in enumerate(fracs):
            rows.append(DichotomyRow(i, d, f, held, sup_next))
        levels.append({"level": i, "nodes": int(np.count_nonzero(sel)), "min_fraction": min(fracs),
                       "condition_held": held, "sup_grad_next": sup_next,
                       "bound": q ** (i + 1) + tol, "implication": implication})
        if not held:
            m2 = i
            reason = "m2"
            break
        i += 1
    else:
        reason = "m1" if i > m1 else "max_levels"
    return DichotomyTrace(rows, levels, m1, m2, reason, tol)


# -- reports ---------------------------------------------------------------------------------------

@dataclass
class RegularityReport:
    alpha_space: OscillationFit
    alpha_time_u: TimeFit | None
    alpha_time_Du: TimeFit | None
    dichotomy: DichotomyTrace | None = None
    label: str = ""

    def oscillation_table(self) -> list[tuple[float, int, float]]:
        fit = self.alpha_space
        return [(r, k, osc) for r, row in zip(fit.radii, fit.oscillations) for k, osc in enumerate(row)]

    def digest(self) -> dict:
        out = {
            "label": self.label,
            "alpha_space": self.alpha_space.alpha,
            "C_space": self.alpha_space.C,
            "residual_space": self.alpha_space.residual,
            "oscillations": [list(r) for r in self.alpha_space.oscillations],
            "radii": list(self.alpha_space.radii),
        }
        for name, fit in (("time_u", self.alpha_time_u), ("time_Du", self.alpha_time_Du)):
            if fit is not None:
                out[f"alpha_{name}"] = fit.exponent
                out[f"predicted_{name}"] = fit.predicted
        if self.dichotomy is not None:
            out["dichotomy"] = self.dichotomy.digest()
        return out


def measure_regularity(u: SpaceTimeField, gamma: float, center=None, r0: float = 0.5,
                       s: float | None = None, clip: bool = False, time_point=None,
                       radii: Sequence[float] | None = None, label: str = "") -> RegularityReport:
    """Oscillation fit on Q_{r0 2^-i}(center, s) and time moduli at ``time_point``."""
    grid = u.grid
    center = (0.0,) * grid.dim if center is None else center
    du = gradient_series(u)
    # Du comes from differences of u, so its round-off scales like eps |u| / h
    flat_tol = _flat_threshold(max(float(np.nanmax(np.abs(du))), float(np.abs(u.values).max()) / grid.h))
    fit = fit_oscillation_decay(du, grid, center, s, radii, gamma, r0, clip, flat_tol)
    point = center if time_point is None else time_point
    tu = tdu = None
    if grid.steps:
        tu = fit_time_modulus(u, point, gamma, fit.alpha)
        try:
            tdu = fit_gradient_time_modulus(du, grid, point, gamma, fit.alpha)
        except FlatField:
            tdu = None  # a time-independent gradient has no modulus to fit
    return RegularityReport(fit, tu, tdu, None, label)


def _spread(values: Sequence[float]) -> float:
    v = np.asarray(values, float)
    mean = float(np.mean(np.abs(v)))
    if mean == 0:
        return 0.0
    return float((v.max() - v.min()) / mean)


@dataclass
class UniformityVerdict:
    epsilons: list[float]
    reports: list[RegularityReport]
    alpha_spread: float
    C_spread: float

    @property
    def spread(self) -> float:
        return max(self.alpha_spread, self.C_spread)

    def passed(self, limit: float = 0.2) -> bool:
        return self.spread <= limit

    def digest(self) -> dict:
        return {"epsilons": self.epsilons, "alpha_spread": self.alpha_spread, "C_spread": self.C_spread,
                "spread": self.spread, "members": [r.digest() for r in self.reports]}


def measure_uniform_holder(cascade, center=None, r0: float = 0.5, s: float | None = None,
                           clip: bool = False) -> UniformityVerdict:
    """Fit every cascade member; spread = (max - min) / mean of alpha and of C."""
    members = [(e, r) for e, r in zip(cascade.epsilons, cascade.reports) if r is not None]
    if len(members) < 2:
        raise ValueError("uniformity needs at least two solved cascade members")
    reports = [measure_regularity(r.solution, cascade.gamma, center, r0, s, clip, label=f"epsilon={e}")
               for e, r in members]
    return UniformityVerdict([e for e, _ in members], reports,
                             _spread([r.alpha_space.alpha for r in reports]),
                             _spread([r.alpha_space.C for r in reports]))


# -- CSV -----------------------------------------------------------------------------------------

OSC_COLUMNS = ["record", "label", "scale", "component", "value", "alpha", "C", "residual", "predicted"]
DICHOTOMY_COLUMNS = ["level", "direction_index", "fraction", "condition_held", "sup_grad_next"]


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator=CSV_EOL)
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def oscillation_rows(reports: Sequence[RegularityReport]) -> list[list]:
    rows = []
    for rep in reports:
        for r, k, osc in rep.oscillation_table():
            rows.append(["oscillation", rep.label, _num(r), k, _num(osc), "", "", "", ""])
        fit = rep.alpha_space
        rows.append(["fit_space", rep.label, "", "", "", _num(fit.alpha), _num(fit.C), _num(fit.residual), ""])
        for name, tf in (("fit_time_u", rep.alpha_time_u), ("fit_time_Du", rep.alpha_time_Du)):
            if tf is not None:
                rows.append([name, rep.label, "", "", "", _num(tf.exponent), _num(tf.C),
                             _num(tf.residual), _num(tf.predicted)])
    return rows


def oscillation_csv(reports: Sequence[RegularityReport]) -> str:
    return _csv_text(OSC_COLUMNS, oscillation_rows(reports))


def dichotomy_csv(trace: DichotomyTrace) -> str:
    rows = [[r.level, r.direction_index, _num(r.fraction), int(r.condition_held), _num(r.sup_grad_next)]
            for r in trace.rows]
    return _csv_text(DICHOTOMY_COLUMNS, rows)


def write_oscillation_csv(path, reports: Sequence[RegularityReport]) -> None:
    atomic_write(path, oscillation_csv(reports))


def write_dichotomy_csv(path, trace: DichotomyTrace) -> None:
    atomic_write(path, dichotomy_csv(trace))
