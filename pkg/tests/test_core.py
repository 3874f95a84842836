import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vispar.core import (
    BoundaryPart,
    Cylinder,
    DomainError,
    Grid,
    SpaceTimeField,
    classify_boundary,
    oscillation,
    parabolic_distance,
    parse_grid_dump,
    read_grid_dump,
    region_mask,
    write_grid_dump,
)
from vispar.core import atomic_write, format_grid_dump


def unit_q1(n=21, steps=10, dim=1):
    return Grid.box([-1.0] * dim, [1.0] * dim, n, -1.0, 0.0, steps)


# -- cylinders ----------------------------------------------------------------------------------

def test_cylinder_extent():
    q = Cylinder((0.0,), 0.0, 0.5)
    assert q.t_bottom == pytest.approx(-0.25)
    assert q.volume() == pytest.approx(1.0 * 0.25)


def test_intrinsic_stretch():
    q = Cylinder.intrinsic((0.0, 0.0), 0.0, 0.25, 0.9, 1.0)
    assert q.time_stretch == pytest.approx(1 / 0.9)
    assert q.duration == pytest.approx(0.0625 / 0.9)


@pytest.mark.parametrize("bad", [dict(radius=0.0), dict(radius=-1.0), dict(time_stretch=0.0)])
def test_cylinder_rejects_bad_sizes(bad):
    args = dict(center=(0.0,), s=0.0, radius=1.0, time_stretch=1.0) | bad
    with pytest.raises(DomainError):
        Cylinder(**args)


def test_boundary_labels():
    g = unit_q1()
    q1 = Cylinder((0.0,), 0.0, 1.0)
    assert classify_boundary(g, q1, ((10,), 0)) is BoundaryPart.BOTTOM
    assert classify_boundary(g, q1, ((20,), 0)) is BoundaryPart.CORNER
    assert classify_boundary(g, q1, ((0,), 5)) is BoundaryPart.SIDE
    assert classify_boundary(g, q1, ((10,), 5)) is BoundaryPart.INTERIOR
    # top rim belongs to the side
    assert classify_boundary(g, q1, ((0,), 10)) is BoundaryPart.SIDE


def test_boundary_label_outside():
    g = Grid.box([-2.0], [2.0], 41, -1.0, 0.0, 10)
    with pytest.raises(DomainError):
        classify_boundary(g, Cylinder((0.0,), 0.0, 1.0), ((0,), 5))


def test_parabolic_distance_examples():
    assert parabolic_distance(((0.0, 0.0), 0.0), ((0.0, 0.0), 0.0)) == 0.0
    assert parabolic_distance(((0.0,), 0.0), ((0.0,), -0.25)) == pytest.approx(0.5)
    # oracle: max(1, sqrt(0.04))
    assert parabolic_distance(((1.0, 0.0), 0.0), ((0.0, 0.0), -0.04)) == pytest.approx(1.0)


finite = st.floats(-3, 3, allow_subnormal=False)


@given(finite, finite, finite, finite)
def test_parabolic_distance_symmetric(x, t, y, s):
    a, b = ((x,), t), ((y,), s)
    assert parabolic_distance(a, b) == parabolic_distance(b, a)
    assert parabolic_distance(a, b) >= abs(x - y)


# -- grids ---------------------------------------------------------------------------------------

def test_box_grid_layout():
    g = Grid.box([-1.0, 0.0], [1.0, 1.0], 21, 0.0, 1.0, 4)
    assert g.counts == (21, 11)
    assert g.h == pytest.approx(0.1)
    assert g.dt == pytest.approx(0.25)
    assert g.shape == (5, 21, 11)
    assert g.interior.sum() == 19 * 9


def test_box_rejects_incommensurate():
    with pytest.raises(DomainError):
        Grid.box([0.0, 0.0], [1.0, 0.33], 11, 0.0, 1.0, 2)


def test_ball_grid_masks():
    g = Grid.ball((0.0, 0.0), 1.0, 33, -1.0, 0.0, 4)
    X, Y = g.coords()
    r = np.hypot(X, Y)
    assert np.all(r[g.active] <= 1 + 1e-9)
    assert np.all(r[g.interior] < 1)
    assert not g.active.all()
    assert np.all(g.active[g.interior])


def test_grid_rejects_interior_on_edge():
    interior = np.zeros(5, bool)
    interior[0] = True
    with pytest.raises(DomainError):
        Grid((0.0,), (5,), 0.25, 0.1, 1, interior=interior)


# -- fields ----------------------------------------------------------------------------------------

def test_field_is_read_only_and_finite():
    g = unit_q1(5, 2)
    f = SpaceTimeField(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    bad = np.zeros(g.shape)
    bad[1, 1] = np.nan
    with pytest.raises(DomainError):
        SpaceTimeField(g, bad)


def test_oscillation_examples():
    g = unit_q1(41, 10)
    X = g.coords()[0]
    assert oscillation(SpaceTimeField(g, np.full(g.shape, 3.0)), Cylinder((0.0,), 0.0, 1.0)) == 0.0
    lin = SpaceTimeField(g, np.broadcast_to(X, g.shape))
    assert oscillation(lin, Cylinder((0.0,), 0.0, 1.0)) == pytest.approx(2.0)
    sq = SpaceTimeField(g, np.broadcast_to(X**2, g.shape))
    # oracle: max - min of x^2 on |x| <= 1/2
    assert oscillation(sq, Cylinder((0.0,), 0.0, 0.5)) == pytest.approx(0.25)


def test_region_mask_time_window():
    g = unit_q1(21, 10)
    m = region_mask(g, Cylinder((0.0,), 0.0, 0.5))
    # levels t >= -0.25 are -0.2, -0.1, 0
    assert np.flatnonzero(m.any(axis=1)).tolist() == [8, 9, 10]


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 1.0), st.floats(0.1, 1.0))
def test_oscillation_monotone_in_region(r1, r2):
    g = unit_q1(41, 10)
    rng = np.random.default_rng(0)
    f = SpaceTimeField(g, rng.normal(size=g.shape))
    lo, hi = sorted((r1, r2))
    small = Cylinder((0.0,), 0.0, lo)
    big = Cylinder((0.0,), 0.0, hi)
    assert big.contains(small)
    assert oscillation(f, small) <= oscillation(f, big)


# -- dump format ------------------------------------------------------------------------------------

def test_dump_header_and_layout():
    g = Grid.box([0.0, 0.0], [1.0, 1.5], 3, 0.0, 1.0, 1)
    vals = np.arange(np.prod(g.shape), dtype=float).reshape(g.shape)
    text = format_grid_dump(SpaceTimeField(g, vals))
    lines = text.split("\n")
    assert lines[0] == "vispar-grid v1 dim=2 nx=3 ny=4 nt=2 h=0.5 dt=1.0"
    assert lines[1] == "0.0 1.0 2.0 3.0"
    assert lines[4] == ""
    assert lines[5] == "12.0 13.0 14.0 15.0"


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 7), st.integers(1, 3), st.integers(1, 2))
def test_dump_round_trip(n, steps, dim):
    g = Grid.box([-1.0] * dim, [1.0] * dim, n, 0.0, 1.0, steps)
    rng = np.random.default_rng(n * 10 + steps)
    f = SpaceTimeField(g, rng.normal(size=g.shape))
    back = parse_grid_dump(format_grid_dump(f), g.lower, g.t0)
    assert np.array_equal(back.values, f.values)
    assert back.grid.h == g.h and back.grid.dt == g.dt


def test_dump_file_round_trip(tmp_path):
    g = unit_q1(7, 3)
    f = SpaceTimeField(g, np.linspace(0, 1, math.prod(g.shape)).reshape(g.shape))
    path = tmp_path / "u.grid"
    write_grid_dump(path, f)
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".tmp")]
    assert np.array_equal(read_grid_dump(path, g.lower, g.t0).values, f.values)


def test_atomic_write_mode_and_failure(tmp_path, monkeypatch):
    path = tmp_path / "a.txt"
    old = os.umask(0o022)
    try:
        atomic_write(path, "x\r\n")
    finally:
        os.umask(old)
    assert path.read_bytes() == b"x\r\n"
    assert path.stat().st_mode & 0o777 == 0o644

    def boom(*a):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write(tmp_path / "b.txt", "y")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.txt"]


def test_dump_rejects_wrong_block_count():
    g = unit_q1(5, 2)
    text = format_grid_dump(SpaceTimeField(g, np.zeros(g.shape)))
    with pytest.raises(ValueError):
        parse_grid_dump(text.replace("nt=3", "nt=4"))
