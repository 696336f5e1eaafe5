from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beetscan.annotations import AnnotatedRegion, MarkerAnnotation, Polygon
from beetscan.classes import MarkerClass, SemanticClass
from beetscan.geometry import (
    AxisAlignedBox,
    MarkerTooSmallError,
    OrientedBox,
    aabb_iou,
    estimate_scale,
    load_binary_mask,
    load_mask,
    mask_area_mm2,
    mask_iou,
    min_area_rect,
    obb_from_corners,
    obb_iou,
    outline_polygon,
    polygon_area,
    polygon_mask,
    rasterize,
    save_binary_mask,
    save_mask,
)
from oracles import brute_min_area_rect, brute_polygon_mask, brute_rasterize, monte_carlo_area, raster_obb_iou, rect_corners


def star_polygon(rng, n=12, cx=50.0, cy=50.0, r_lo=10.0, r_hi=40.0):
    """Random simple polygon: sorted angles, random radii around a center."""
    t = np.sort(rng.uniform(0, 2 * np.pi, n))
    r = rng.uniform(r_lo, r_hi, n)
    return [(cx + a * math.cos(b), cy + a * math.sin(b)) for a, b in zip(r, t)]


# --- polygon area -------------------------------------------------------------


def test_polygon_area_examples():
    assert polygon_area([(0, 0), (4, 0), (0, 3)]) == 6.0
    assert polygon_area([(0, 0), (1, 0), (1, 1), (0, 1)]) == 1.0
    assert polygon_area(Polygon(((0.0, 0.0), (0.0, 3.0), (4.0, 0.0)))) == 6.0  # clockwise


def test_polygon_area_matches_monte_carlo():
    rng = np.random.default_rng(3)
    for _ in range(5):
        verts = star_polygon(rng)
        mc = monte_carlo_area(verts, 200_000, seed=int(rng.integers(1 << 30)))
        assert polygon_area(verts) == pytest.approx(mc, rel=0.02)


coords = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), coords, coords, st.floats(0, 2 * math.pi), st.floats(0.1, 5))
def test_polygon_area_invariances(seed, dx, dy, theta, s):
    verts = np.array(star_polygon(np.random.default_rng(seed), n=8))
    a = polygon_area(verts)
    c, si = math.cos(theta), math.sin(theta)
    rot = verts @ np.array([[c, si], [-si, c]])
    assert polygon_area(verts[::-1]) == pytest.approx(a, rel=1e-9)
    assert polygon_area(verts + [dx, dy]) == pytest.approx(a, rel=1e-9)
    assert polygon_area(rot) == pytest.approx(a, rel=1e-9)
    assert polygon_area(verts * s) == pytest.approx(a * s * s, rel=1e-9)


# --- rasterization ------------------------------------------------------------


def region(cls, verts, inst=1):
    return AnnotatedRegion(SemanticClass[cls], Polygon(tuple(map(tuple, verts))), inst)


def test_rasterize_square():
    m = rasterize([region("Beet", [(10, 10), (20, 10), (20, 20), (10, 20)])], 100, 100)
    assert m.dtype == np.uint8
    assert (m == SemanticClass.Beet).sum() == 100
    assert (m == SemanticClass.Bg).sum() == 9900


def test_rasterize_priority_rot_over_beet():
    regions = [
        region("Rot", [(4, 4), (6, 4), (6, 6), (4, 6)]),
        region("Beet", [(0, 0), (10, 0), (10, 10), (0, 10)]),
    ]
    m = rasterize(regions, 12, 12)
    assert (m == SemanticClass.Rot).sum() == 4
    assert (m == SemanticClass.Beet).sum() == 96


def test_rasterize_matches_brute_force_five_overlapping_regions():
    rng = np.random.default_rng(11)
    names = ["Beet", "Soil", "Leaf", "Cut", "Dmg"]
    raw = [(n, star_polygon(rng, n=9, cx=rng.uniform(15, 35), cy=rng.uniform(15, 35), r_lo=3, r_hi=15)) for n in names]
    ours = rasterize([region(n, v) for n, v in raw], 50, 48)
    assert np.array_equal(ours, brute_rasterize(raw, 50, 48))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_polygon_mask_matches_pnpoly(seed):
    rng = np.random.default_rng(seed)
    verts = star_polygon(rng, n=int(rng.integers(3, 10)), cx=16, cy=14, r_lo=2, r_hi=14)
    # snap some vertices onto pixel centers and grid lines to exercise ties
    verts = [(round(x * 2) / 2, round(y * 2) / 2) if i % 2 else (x, y) for i, (x, y) in enumerate(verts)]
    if abs(polygon_area(verts)) < 1e-9:
        return
    assert np.array_equal(polygon_mask(verts, 32, 28), brute_polygon_mask(verts, 32, 28))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 30), st.integers(0, 30), st.integers(1, 20), st.integers(1, 20))
def test_integer_rectangles_rasterize_exactly(x, y, w, h):
    m = polygon_mask([(x, y), (x + w, y), (x + w, y + h), (x, y + h)], 64, 64)
    assert m.sum() == w * h == polygon_area([(x, y), (x + w, y), (x + w, y + h), (x, y + h)])


def test_polygon_partly_outside_canvas():
    m = polygon_mask([(-5, -5), (5, -5), (5, 5), (-5, 5)], 10, 10)
    assert m.sum() == 25


# --- outline tracing ------------------------------------------------------------


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_outline_polygon_reproduces_filled_mask(seed):
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    mask = rng.random((12, 14)) < rng.uniform(0.2, 0.7)
    if not mask.any():
        return
    filled = ndimage.binary_fill_holes(mask)
    verts = outline_polygon(mask)
    assert np.array_equal(polygon_mask(verts, 14, 12), filled)


# --- IoU functions ------------------------------------------------------------


def test_mask_iou_examples():
    a = np.zeros((4, 4), bool)
    b = np.zeros((4, 4), bool)
    assert mask_iou(a, b) == 1.0
    a[0:2, 0:2] = True
    assert mask_iou(a, a) == 1.0
    b[2:4, 2:4] = True
    assert mask_iou(a, b) == 0.0
    c = np.zeros((4, 4), bool)
    c[1:3, 0:2] = True  # overlaps a in a 1x2 strip
    assert mask_iou(a, c) == pytest.approx(2 / 6)
    with pytest.raises(ValueError):
        mask_iou(a, np.zeros((3, 4), bool))


def test_aabb_iou_examples():
    a = AxisAlignedBox(0, 0, 2, 2)
    assert aabb_iou(a, a) == 1.0
    assert aabb_iou(a, AxisAlignedBox(2, 0, 4, 2)) == 0.0
    assert aabb_iou(a, AxisAlignedBox(1, 1, 3, 3)) == pytest.approx(1 / 7)
    with pytest.raises(ValueError):
        AxisAlignedBox(1, 0, 1, 2)


def test_obb_iou_examples():
    a = OrientedBox(10, 10, 8, 4, math.radians(37))
    assert obb_iou(a, a) == 1.0
    b1, b2 = OrientedBox(1, 1, 2, 2, 0.0), OrientedBox(2, 2, 2, 2, 0.0)
    assert obb_iou(b1, b2) == pytest.approx(aabb_iou(AxisAlignedBox(0, 0, 2, 2), AxisAlignedBox(1, 1, 3, 3)), abs=1e-12)
    # unit square vs the same square rotated 45 degrees about the shared center:
    # the intersection is a regular octagon of area 2(sqrt 2 - 1)
    sq, rot = OrientedBox(0, 0, 1, 1, 0.0), OrientedBox(0, 0, 1, 1, math.pi / 4)
    octagon = 2 * (math.sqrt(2) - 1)
    assert obb_iou(sq, rot) == pytest.approx(octagon / (2 - octagon), abs=1e-12)
    assert obb_iou(sq, rot) == pytest.approx(raster_obb_iou((0, 0, 1, 1, 0.0), (0, 0, 1, 1, math.pi / 4)), abs=1e-3)


def test_obb_iou_matches_raster_oracle_sample():
    rng = np.random.default_rng(5)
    for _ in range(5):
        a = (rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(1, 8), rng.uniform(1, 8), rng.uniform(0, np.pi))
        b = (a[0] + rng.uniform(-3, 3), a[1] + rng.uniform(-3, 3), rng.uniform(1, 8), rng.uniform(1, 8), rng.uniform(0, np.pi))
        assert obb_iou(OrientedBox(*a), OrientedBox(*b)) == pytest.approx(raster_obb_iou(a, b, grid=1000), abs=3e-3)


boxes = st.builds(
    OrientedBox,
    st.floats(-20, 20),
    st.floats(-20, 20),
    st.floats(0.5, 15),
    st.floats(0.5, 15),
    st.floats(-4 * math.pi, 4 * math.pi),
)


@settings(max_examples=150, deadline=None)
@given(boxes, boxes)
def test_obb_iou_symmetric_and_bounded(a, b):
    ab, ba = obb_iou(a, b), obb_iou(b, a)
    assert 0.0 <= ab <= 1.0
    assert ab == pytest.approx(ba, abs=1e-9)
    assert obb_iou(a, a) == 1.0


@settings(max_examples=100, deadline=None)
@given(boxes)
def test_oriented_box_canonical_form(b):
    assert b.width >= b.height > 0
    assert 0.0 <= b.angle < math.pi
    # same rectangle described with swapped sides and a quarter turn
    c = OrientedBox(b.cx, b.cy, b.height, b.width, b.angle + math.pi / 2)
    if not math.isclose(b.width, b.height):
        assert c.angle == pytest.approx(b.angle, abs=1e-9) or abs(abs(c.angle - b.angle) - math.pi) < 1e-9
    assert obb_iou(b, c) == pytest.approx(1.0, abs=1e-9)


# --- oriented boxes from corners -------------------------------------------------


def test_obb_from_axis_aligned_corners():
    b = obb_from_corners([(10, 20), (50, 20), (50, 30), (10, 30)])
    assert (b.cx, b.cy, b.width, b.height) == pytest.approx((30, 25, 40, 10))
    assert b.angle == pytest.approx(0.0, abs=1e-12) or b.angle == pytest.approx(math.pi, abs=1e-12)


def test_obb_from_rotated_corners():
    b = obb_from_corners(rect_corners(5, 5, 40, 10, math.radians(30)))
    assert (b.width, b.height) == pytest.approx((40, 10))
    assert b.angle == pytest.approx(math.radians(30), abs=1e-9)


def test_obb_from_corners_rejects_degenerate():
    with pytest.raises(ValueError):
        obb_from_corners([(0, 0), (1, 1), (2, 2), (3, 3)])


def test_min_area_rect_matches_angle_sweep_on_skewed_quads():
    rng = np.random.default_rng(8)
    for _ in range(10):
        quad = np.array(rect_corners(0, 0, rng.uniform(5, 20), rng.uniform(2, 5), rng.uniform(0, np.pi)))
        quad += rng.uniform(-0.6, 0.6, size=quad.shape)
        b = min_area_rect(quad)
        area, w, h = brute_min_area_rect(quad)
        assert b.width * b.height <= area + 1e-9
        assert b.width * b.height == pytest.approx(area, rel=1e-4)
        # every point inside (or on) the rectangle
        c, s = math.cos(b.angle), math.sin(b.angle)
        u = (quad[:, 0] - b.cx) * c + (quad[:, 1] - b.cy) * s
        v = -(quad[:, 0] - b.cx) * s + (quad[:, 1] - b.cy) * c
        assert np.all(np.abs(u) <= b.width / 2 + 1e-9) and np.all(np.abs(v) <= b.height / 2 + 1e-9)


# --- scale --------------------------------------------------------------------


def marker(corners, cls=MarkerClass.Sign):
    return MarkerAnnotation(cls, tuple(tuple(map(float, p)) for p in corners))


def test_estimate_scale_axis_aligned():
    est = estimate_scale(marker([(0, 0), (200, 0), (200, 100), (0, 100)]), (100.0, 50.0))
    assert est.mm_per_pixel == pytest.approx(0.5, abs=1e-12)
    assert est.residual == pytest.approx(0.0, abs=1e-12)
    assert est.marker == MarkerClass.Sign


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(-500, 500), st.floats(-500, 500))
def test_estimate_scale_rigid_invariance(theta, dx, dy):
    corners = rect_corners(1000 + dx, 1000 + dy, 200, 100, theta)
    est = estimate_scale(marker(corners), (100.0, 50.0))
    assert est.mm_per_pixel == pytest.approx(0.5, abs=1e-9)
    assert est.residual == pytest.approx(0.0, abs=1e-9)


def test_estimate_scale_pairs_longer_side_with_length_regardless_of_order():
    tall = marker([(0, 0), (100, 0), (100, 200), (0, 200)])
    assert estimate_scale(tall, (100.0, 50.0)).mm_per_pixel == pytest.approx(0.5)


def test_estimate_scale_skewed_fixture_hand_computed():
    # sides: top 200, right sqrt(10^2+100^2), bottom 190, left 100
    corners = [(0, 0), (200, 0), (190, 100), (0, 100)]
    right = math.hypot(10, 100)
    ratios = [100 / 200, 50 / right, 100 / 190, 50 / 100]
    mean = sum(ratios) / 4
    resid = max(abs(r - mean) / mean for r in ratios)
    est = estimate_scale(marker(corners), (100.0, 50.0))
    assert est.mm_per_pixel == pytest.approx(mean, abs=1e-12)
    assert est.residual == pytest.approx(resid, abs=1e-12)


def test_estimate_scale_rejects_tiny_marker():
    with pytest.raises(MarkerTooSmallError):
        estimate_scale(marker([(0, 0), (100, 0), (100, 0.8), (0, 0.8)]), (100.0, 50.0))


def test_mask_area_mm2():
    est = estimate_scale(marker([(0, 0), (200, 0), (200, 100), (0, 100)]), (100.0, 50.0))
    assert mask_area_mm2(100, est) == pytest.approx(25.0)
    assert mask_area_mm2(0, est) == 0.0
    # fixture beet: 40x30 px rectangle -> 1200 px^2 -> 300 mm^2
    beet = polygon_mask([(10, 10), (50, 10), (50, 40), (10, 40)], 64, 64)
    assert mask_area_mm2(beet.sum(), est) == pytest.approx(300.0)


# --- mask files ---------------------------------------------------------------


def test_mask_png_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.integers(0, 7, size=(9, 13)).astype(np.uint8)
    save_mask(m, tmp_path / "m.png")
    assert np.array_equal(load_mask(tmp_path / "m.png"), m)
    b = rng.random((9, 13)) < 0.5
    save_binary_mask(b, tmp_path / "b.png")
    back = load_binary_mask(tmp_path / "b.png")
    assert back.dtype == bool and np.array_equal(back, b)
    with pytest.raises(ValueError):
        save_mask(np.full((2, 2), 7, np.uint8), tmp_path / "bad.png")
