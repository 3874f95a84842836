"""Geometry and field primitives: cylinders, parabolic boundary parts, grids, fields."""

from __future__ import annotations

import enum
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "DomainError",
    "BoundaryPart",
    "Cylinder",
    "Grid",
    "SpaceTimeField",
    "parabolic_distance",
    "classify_boundary",
    "oscillation",
    "region_mask",
    "write_grid_dump",
    "read_grid_dump",
]

# relative tolerance used when deciding whether a node sits on a sphere / time level
GEOM_TOL = 1e-9


class DomainError(ValueError):
    """A point, region or argument lies outside the domain an operation accepts."""


class BoundaryPart(enum.Enum):
    BOTTOM = "bottom"
    CORNER = "corner"
    SIDE = "side"
    FULL = "full"
    INTERIOR = "interior"

    def is_parabolic(self) -> bool:
        """True for every label that belongs to the parabolic boundary."""
        return self in (BoundaryPart.BOTTOM, BoundaryPart.CORNER, BoundaryPart.SIDE, BoundaryPart.FULL)


@dataclass(frozen=True)
class Cylinder:
    """B_r(y) x (s - sigma r^2, s].

    ``time_stretch`` is 1 for the standard cylinder; the intrinsic cylinder
    used in the gradient dichotomy has ``time_stretch = (1 - delta)**(-gamma)``.
    """

    center: tuple[float, ...]
    s: float
    radius: float
    time_stretch: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"cylinder radius must be positive, got {self.radius}")
        if not self.time_stretch > 0:
            raise DomainError(f"time stretch must be positive, got {self.time_stretch}")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @classmethod
    def intrinsic(cls, center, s, tau_power: float, shrink_power: float, gamma: float) -> "Cylinder":
        """Q_{tau^i}^{(1-delta)^i}: radius tau^i, time stretch ((1-delta)^i)^(-gamma)."""
        return cls(center, s, tau_power, shrink_power ** (-gamma))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def t_bottom(self) -> float:
        return self.s - self.time_stretch * self.radius**2

    @property
    def duration(self) -> float:
        return self.time_stretch * self.radius**2

    def volume(self) -> float:
        n = self.dim
        ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.radius**n
        return ball * self.duration

    def contains(self, other: "Cylinder") -> bool:
        """Closed-set inclusion of ``other`` in ``self``."""
        gap = float(np.linalg.norm(np.subtract(other.center, self.center)))
        tol = GEOM_TOL * max(1.0, self.radius)
        return (
            gap + other.radius <= self.radius + tol
            and other.s <= self.s + tol
            and other.t_bottom >= self.t_bottom - tol
        )


def parabolic_distance(X, Y) -> float:
    """d(X, Y) = max(|x - y|, sqrt|t - s|) for points given as (x, t)."""
    x, t = X
    y, s = Y
    # hypot avoids the underflow of squaring tiny differences
    dx = math.hypot(*np.subtract(np.atleast_1d(x), np.atleast_1d(y)).tolist())
    return max(dx, math.sqrt(abs(t - s)))


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform space grid (n = 1 or 2) times uniform time levels.

    ``interior`` marks the nodes the scheme updates; ``active`` marks the closed
    discrete domain (interior plus Dirichlet nodes). Nodes outside ``active``
    are carried along but never read by an interior stencil.
    """

    lower: tuple[float, ...]
    counts: tuple[int, ...]
    h: float
    dt: float
    steps: int
    t0: float = 0.0
    interior: np.ndarray | None = field(default=None, repr=False)
    active: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "counts", counts)
        if len(lower) != len(counts) or len(counts) not in (1, 2):
            raise DomainError("grid dimension must be 1 or 2")
        if not (self.h > 0 and self.dt > 0):
            raise DomainError("grid steps h and dt must be positive")
        if self.steps < 0 or min(counts) < 3:
            raise DomainError("need at least 3 nodes per axis and a nonnegative step count")
        active = np.ones(counts, bool) if self.active is None else np.array(self.active, bool)
        if self.interior is None:
            interior = np.zeros(counts, bool)
            interior[tuple(slice(1, -1) for _ in counts)] = True
            interior &= active
        else:
            interior = np.array(self.interior, bool)
        if interior.shape != counts or active.shape != counts:
            raise DomainError("mask shape does not match the grid")
        if np.any(interior & ~active):
            raise DomainError("interior nodes must be active")
        edge = np.zeros(counts, bool)
        for ax in range(len(counts)):
            idx = [slice(None)] * len(counts)
            idx[ax] = 0
            edge[tuple(idx)] = True
            idx[ax] = -1
            edge[tuple(idx)] = True
        if np.any(interior & edge):
            raise DomainError("interior nodes need neighbours on every side")
        # every stencil neighbour (reach 1, diagonals included) of an interior node is active
        inner = tuple(slice(1, -1) for _ in counts)
        for off in _neighbour_offsets(len(counts)):
            shifted = active[tuple(slice(1 + o, c - 1 + o) for o, c in zip(off, counts))]
            if np.any(interior[inner] & ~shifted):
                raise DomainError("interior node with an inactive stencil neighbour")
        interior.setflags(write=False)
        active.setflags(write=False)
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "active", active)

    # -- constructors -------------------------------------------------------
    @classmethod
    def box(cls, lower, upper, n, t0: float, t1: float, steps: int) -> "Grid":
        """Box grid with ``n`` nodes along the first axis (spacing shared by all axes)."""
        lower = np.atleast_1d(np.asarray(lower, float))
        upper = np.atleast_1d(np.asarray(upper, float))
        h = float(upper[0] - lower[0]) / (int(n) - 1)
        counts = tuple(int(round((u - l) / h)) + 1 for l, u in zip(lower, upper))
        for l, u, c in zip(lower, upper, counts):
            if abs(l + (c - 1) * h - u) > 1e-9 * max(1.0, abs(u)):
                raise DomainError("box extents are not commensurate with a shared spacing")
        dt = (t1 - t0) / steps if steps else 1.0  # a single level has no time spacing
        return cls(tuple(lower), counts, h, dt, steps, t0)

    @classmethod
    def ball(cls, center, radius: float, n: int, t0: float, t1: float, steps: int) -> "Grid":
        """Masked ball B_radius(center) inside its bounding box, ``n`` nodes per diameter.

        Dirichlet nodes are the nodes of the closed ball that lack a full stencil,
        so every boundary value sits inside the closed ball.
        """
        center = np.atleast_1d(np.asarray(center, float))
        lower = center - radius
        h = 2.0 * radius / (n - 1)
        counts = (n,) * len(center)
        axes = [lower[k] + h * np.arange(n) for k in range(len(center))]
        mesh = np.meshgrid(*axes, indexing="ij")
        dist = np.sqrt(sum((m - c) ** 2 for m, c in zip(mesh, center)))
        active = dist <= radius * (1 + GEOM_TOL)
        interior = np.zeros_like(active)
        inner = tuple(slice(1, -1) for _ in counts)
        ok = active[inner] & (dist[inner] < radius * (1 - GEOM_TOL))
        for off in _neighbour_offsets(len(counts)):
            ok &= active[tuple(slice(1 + o, c - 1 + o) for o, c in zip(off, counts))]
        interior[inner] = ok
        return cls(tuple(lower), counts, h, (t1 - t0) / steps, steps, t0, interior, active)

    # -- derived ------------------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.steps + 1,) + self.counts

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(l + (c - 1) * self.h for l, c in zip(self.lower, self.counts))

    @property
    def t1(self) -> float:
        return self.t0 + self.steps * self.dt

    @property
    def boundary(self) -> np.ndarray:
        return self.active & ~self.interior

    def axes(self) -> list[np.ndarray]:
        return [l + self.h * np.arange(c) for l, c in zip(self.lower, self.counts)]

    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    def point(self, index) -> tuple[np.ndarray, float]:
        """Coordinates (x, t) of a (space index tuple, time index) pair."""
        space, k = index
        space = tuple(np.atleast_1d(space))
        x = np.array([l + self.h * i for l, i in zip(self.lower, space)])
        return x, self.t0 + self.dt * k

    def with_time(self, t0: float, t1: float, steps: int) -> "Grid":
        return Grid(self.lower, self.counts, self.h, (t1 - t0) / steps, steps, t0, self.interior, self.active)

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "lower": list(self.lower),
            "counts": list(self.counts),
            "h": self.h,
            "dt": self.dt,
            "steps": self.steps,
            "t0": self.t0,
        }


def _neighbour_offsets(dim: int) -> list[tuple[int, ...]]:
    offs = np.array(np.meshgrid(*[[-1, 0, 1]] * dim, indexing="ij")).reshape(dim, -1).T
    return [tuple(int(v) for v in o) for o in offs if any(o)]


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Scalar values on every (time level, space node) of a grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DomainError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def slice(self, k: int) -> np.ndarray:
        return self.values[k]

    def sup_norm(self, where: np.ndarray | None = None) -> float:
        v = np.abs(self.values)
        if where is not None:
            v = v[where]
        return float(v.max())


def region_mask(grid: Grid, region: Cylinder) -> np.ndarray:
    """Boolean (time, space...) mask of active grid nodes in the closed cylinder."""
    if region.dim != grid.dim:
        raise DomainError("region and grid dimensions differ")
    tol = GEOM_TOL * max(1.0, region.radius)
    dist = np.sqrt(sum((c - y) ** 2 for c, y in zip(grid.coords(), region.center)))
    in_ball = (dist <= region.radius + tol) & grid.active
    t = grid.times()
    ttol = GEOM_TOL * max(1.0, abs(region.s), region.duration)
    in_time = (t >= region.t_bottom - ttol) & (t <= region.s + ttol)
    return in_time.reshape((-1,) + (1,) * grid.dim) & in_ball[None]


def classify_boundary(grid: Grid, cylinder: Cylinder, point) -> BoundaryPart:
    """Label a grid node of the closed cylinder as bottom, corner, side or interior.

    The top rim |x - y| = r, t = s is labelled SIDE so that every node of the
    closed cylinder receives exactly one label.
    """
    x, t = grid.point(point)
    dist = float(np.linalg.norm(x - np.asarray(cylinder.center)))
    tol = GEOM_TOL * max(1.0, cylinder.radius)
    ttol = GEOM_TOL * max(1.0, abs(cylinder.s), cylinder.duration)
    if dist > cylinder.radius + tol or t < cylinder.t_bottom - ttol or t > cylinder.s + ttol:
        raise DomainError(f"point {(tuple(x), t)} lies outside the closed cylinder")
    on_sphere = abs(dist - cylinder.radius) <= tol
    at_bottom = abs(t - cylinder.t_bottom) <= ttol
    if at_bottom:
        return BoundaryPart.CORNER if on_sphere else BoundaryPart.BOTTOM
    return BoundaryPart.SIDE if on_sphere else BoundaryPart.INTERIOR


def _oscillation_of(values: np.ndarray, grid: Grid, region: Cylinder) -> float:
    sel = region_mask(grid, region)
    picked = values[sel]
    picked = picked[np.isfinite(picked)]
    if picked.size == 0:
        raise DomainError("region contains no grid node")
    return float(picked.max() - picked.min())


def oscillation(fld: SpaceTimeField, region: Cylinder) -> float:
    """max - min of the field over grid nodes in the closed region."""
    return _oscillation_of(fld.values, fld.grid, region)


# -- grid dump -------------------------------------------------------------------

def _header(grid: Grid) -> str:
    parts = [f"vispar-grid v1 dim={grid.dim}", f"nx={grid.counts[0]}"]
    if grid.dim == 2:
        parts.append(f"ny={grid.counts[1]}")
    parts += [f"nt={grid.steps + 1}", f"h={grid.h!r}", f"dt={grid.dt!r}"]
    return " ".join(parts)


def format_grid_dump(fld: SpaceTimeField) -> str:
    lines = [_header(fld.grid)]
    for k in range(fld.grid.steps + 1):
        block = np.atleast_2d(fld.values[k])
        for row in block:
            lines.append(" ".join(repr(float(v)) for v in row))
        lines.append("")
    return "\n".join(lines)


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write through a temporary file and rename, so aborted runs leave no partial file."""
    path = os.fspath(path)
    folder = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        # mkstemp creates 0600; give the result the mode a plain open() would
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_grid_dump(path, fld: SpaceTimeField) -> None:
    atomic_write(path, format_grid_dump(fld))


def parse_grid_dump(text: str, lower: Sequence[float] | None = None, t0: float = 0.0) -> SpaceTimeField:
    """Inverse of :func:`format_grid_dump`; the header carries no origin, so pass it."""
    lines = text.splitlines()
    head = lines[0].split()
    if head[:2] != ["vispar-grid", "v1"]:
        raise ValueError("not a vispar-grid v1 dump")
    meta = dict(tok.split("=", 1) for tok in head[2:])
    dim = int(meta["dim"])
    counts = (int(meta["nx"]),) if dim == 1 else (int(meta["nx"]), int(meta["ny"]))
    nt = int(meta["nt"])
    h, dt = float(meta["h"]), float(meta["dt"])
    blocks: list[list[list[float]]] = [[]]
    for line in lines[1:]:
        if line.strip():
            blocks[-1].append([float(v) for v in line.split()])
        elif blocks[-1]:
            blocks.append([])
    if not blocks[-1]:
        blocks.pop()
    if len(blocks) != nt:
        raise ValueError(f"expected {nt} time blocks, found {len(blocks)}")
    values = np.array(blocks, dtype=float).reshape((nt,) + counts)
    lower = tuple(lower) if lower is not None else (0.0,) * dim
    grid = Grid(lower, counts, h, dt, nt - 1, t0)
    return SpaceTimeField(grid, values)


def read_grid_dump(path, lower: Sequence[float] | None = None, t0: float = 0.0) -> SpaceTimeField:
    with open(path) as fh:
        return parse_grid_dump(fh.read(), lower, t0)
