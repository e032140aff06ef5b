from __future__ import annotations

import json
import math

import numpy as np
import pytest

from thicksmooth import geometry
from thicksmooth.errors import DegenerateTriangle, InvalidRegion
from thicksmooth.geometry import (Polygon, PolygonalDomain, Triangle, bounding_rectangle,
                                  contains, triangle_metrics, triangulate)


def shoelace(pts):
    x, y = np.asarray(pts, dtype=float).T
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def square_with_hole():
    outer = Polygon.ccw([(0, 0), (1, 0), (1, 1), (0, 1)])
    hole = Polygon.ccw([(0.4, 0.4), (0.6, 0.4), (0.6, 0.6), (0.4, 0.6)])
    return PolygonalDomain(outer, (hole,))


L_SHAPE = [(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)]


def check_invariants(t, region, min_angle=None):
    assert abs(t.total_area - region.area) <= 1e-9 * region.area
    assert np.all(t.areas <= t.max_area * (1 + 1e-12))
    assert t.min_angles.min() >= (min_angle or t.min_angle) * (1 - 1e-9)
    assert np.all(t.areas > 0)


class TestPolygon:
    def test_rejects_too_few_vertices(self):
        with pytest.raises(InvalidRegion):
            Polygon(((0, 0), (1, 0)))

    def test_rejects_clockwise(self):
        with pytest.raises(InvalidRegion):
            Polygon(((0, 0), (0, 1), (1, 1), (1, 0)))

    def test_ccw_reorients(self):
        p = Polygon.ccw([(0, 0), (0, 1), (1, 1), (1, 0)])
        assert p.area == pytest.approx(1.0)

    def test_rejects_repeated_vertex(self):
        with pytest.raises(InvalidRegion):
            Polygon(((0, 0), (1, 0), (1, 0), (0, 1)))

    def test_rejects_self_intersection(self):
        with pytest.raises(InvalidRegion):
            Polygon.ccw([(0, 0), (1, 1), (1, 0), (0, 1)])

    def test_centroid_and_diameter(self):
        p = Polygon.ccw([(0, 0), (2, 0), (2, 1), (0, 1)])
        np.testing.assert_allclose(p.centroid, [1.0, 0.5])
        assert p.diameter == pytest.approx(math.sqrt(5))

    def test_interior_angles_sum(self):
        p = Polygon.ccw(L_SHAPE)
        assert p.interior_angles().sum() == pytest.approx((len(L_SHAPE) - 2) * math.pi)


class TestDomain:
    def test_hole_must_be_inside(self):
        outer = Polygon.ccw([(0, 0), (1, 0), (1, 1), (0, 1)])
        hole = Polygon.ccw([(0.5, 0.5), (1.5, 0.5), (1.5, 1.5), (0.5, 1.5)])
        with pytest.raises(InvalidRegion):
            PolygonalDomain(outer, (hole,))

    def test_overlapping_holes(self):
        outer = Polygon.ccw([(0, 0), (1, 0), (1, 1), (0, 1)])
        h1 = Polygon.ccw([(0.2, 0.2), (0.5, 0.2), (0.5, 0.5), (0.2, 0.5)])
        h2 = Polygon.ccw([(0.3, 0.3), (0.6, 0.3), (0.6, 0.6), (0.3, 0.6)])
        with pytest.raises(InvalidRegion):
            PolygonalDomain(outer, (h1, h2))

    def test_area_with_hole(self):
        assert square_with_hole().area == pytest.approx(0.96)

    def test_json_round_trip(self, tmp_path):
        d = square_with_hole()
        geometry.save_domain(d, tmp_path / "d.json")
        back = geometry.load_domain(tmp_path / "d.json")
        assert back.to_json() == d.to_json()
        assert set(json.loads((tmp_path / "d.json").read_text())) == {"outer", "holes"}

    def test_malformed_json(self):
        with pytest.raises(InvalidRegion):
            PolygonalDomain.from_json({"outer": [[0, 0], [1, 0]]})
        with pytest.raises(InvalidRegion):
            PolygonalDomain.from_json({"holes": []})


class TestContains:
    def test_examples(self, unit_square):
        assert contains(unit_square, (0.5, 0.5))
        assert not contains(unit_square, (2, 0))
        assert not contains(square_with_hole(), (0.5, 0.5))
        assert contains(square_with_hole(), (0.2, 0.5))

    def test_boundary_is_outside(self, unit_square):
        for p in [(0, 0.5), (1, 0.5), (0.5, 0), (0.5, 1), (0, 0), (1, 1)]:
            assert not contains(unit_square, p)
        assert not contains(square_with_hole(), (0.4, 0.5))

    def test_vectorized(self, unit_square):
        pts = np.array([[0.5, 0.5], [2, 0], [0.1, 0.9]])
        np.testing.assert_array_equal(contains(unit_square, pts), [True, False, True])


class TestTriangleMetrics:
    def test_right_triangle(self):
        m = triangle_metrics(Triangle((0, 0), (1, 0), (0, 1)))
        assert m.area == pytest.approx(0.5)
        assert m.diameter == pytest.approx(math.sqrt(2))
        assert m.min_angle == pytest.approx(math.pi / 4)

    def test_scaled_triangle(self):
        m = triangle_metrics(Triangle((0, 0), (2, 0), (0, 2)))
        assert m.area == pytest.approx(2.0)
        assert m.diameter == pytest.approx(2 * math.sqrt(2))

    def test_equilateral(self):
        m = triangle_metrics(Triangle((0, 0), (1, 0), (0.5, math.sqrt(3) / 2)))
        assert m.area == pytest.approx(math.sqrt(3) / 4)
        assert m.min_angle == pytest.approx(math.pi / 3)

    def test_shape_constant_consistency(self):
        m = triangle_metrics(Triangle((0, 0), (3, 0), (0.4, 1.1)))
        assert m.area >= m.shape_constant * m.diameter**2 * (1 - 1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateTriangle):
            triangle_metrics(Triangle((0, 0), (1, 1), (2, 2)))

    def test_orientation_independent(self):
        a = triangle_metrics(Triangle((0, 0), (1, 0), (0, 1)))
        b = triangle_metrics(Triangle((0, 0), (0, 1), (1, 0)))
        assert a == b


class TestBoundingRectangle:
    def test_examples(self, unit_square):
        assert tuple(bounding_rectangle(unit_square)) == (0, 1, 0, 1)
        tri = PolygonalDomain.from_polygon([(0, 0), (4, 0), (1, 3)])
        assert tuple(bounding_rectangle(tri)) == (0, 4, 0, 3)
        assert tuple(bounding_rectangle(square_with_hole())) == (0, 1, 0, 1)


class TestTriangulate:
    def test_unit_square_coarse(self, unit_square):
        t = triangulate(unit_square, 0.5, math.radians(20))
        assert t.total_area == pytest.approx(1.0, abs=1e-9)
        check_invariants(t, unit_square)

    def test_unit_square_area_constraint(self, unit_square):
        t = triangulate(unit_square, 0.01)
        assert np.all(t.areas <= 0.01)
        check_invariants(t, unit_square)

    def test_l_shape(self):
        region = PolygonalDomain.from_polygon(L_SHAPE)
        t = triangulate(region, 0.01, math.radians(20))
        assert t.total_area == pytest.approx(shoelace(L_SHAPE), abs=1e-9)
        assert shoelace(L_SHAPE) == pytest.approx(0.75)
        check_invariants(t, region, math.radians(20))

    def test_with_hole(self):
        region = square_with_hole()
        t = triangulate(region, 0.005)
        check_invariants(t, region)
        assert not np.any(contains(region, t.centroids) == 0)

    def test_sharp_angle_defaults(self):
        region = PolygonalDomain.from_polygon([(0, 0), (1, 0), (1, math.tan(math.radians(10)))])
        t = triangulate(region, 0.001)
        assert t.min_angle == pytest.approx(math.radians(10))
        check_invariants(t, region)

    def test_min_angle_above_corner_rejected(self):
        region = PolygonalDomain.from_polygon([(0, 0), (1, 0), (1, math.tan(math.radians(10)))])
        with pytest.raises(InvalidRegion):
            triangulate(region, 0.01, math.radians(20))

    def test_bad_parameters(self, unit_square):
        with pytest.raises(InvalidRegion):
            triangulate(unit_square, 0.0)
        with pytest.raises(InvalidRegion):
            triangulate(unit_square, 0.1, math.radians(61))

    def test_refinement_growth_is_linear(self, unit_square):
        n = {k: len(triangulate(unit_square, 0.01 / k)) for k in (1, 2, 4, 8)}
        for k in (2, 4, 8):
            assert n[k] >= n[1]
            assert n[k] <= 4 * k * n[1]
        assert n[2] >= n[1]

    def test_centroids_inside(self, unit_square):
        t = triangulate(PolygonalDomain.from_polygon(L_SHAPE), 0.002)
        assert np.all(contains(PolygonalDomain.from_polygon(L_SHAPE), t.centroids))

    def test_interiors_disjoint(self):
        # total area matches and no triangle is inverted, so interiors cannot overlap
        region = PolygonalDomain.from_polygon(L_SHAPE)
        t = triangulate(region, 0.003)
        c = t.corners
        signed = 0.5 * ((c[:, 1, 0] - c[:, 0, 0]) * (c[:, 2, 1] - c[:, 0, 1])
                        - (c[:, 2, 0] - c[:, 0, 0]) * (c[:, 1, 1] - c[:, 0, 1]))
        assert np.all(signed > 0)
        assert math.fsum(signed) == pytest.approx(region.area, rel=1e-12)

    def test_structured(self, unit_square):
        t = triangulate(unit_square, 1e-4, method="structured")
        check_invariants(t, unit_square)
        with pytest.raises(InvalidRegion):
            triangulate(PolygonalDomain.from_polygon(L_SHAPE), 0.01, method="structured")

    def test_save_load_deterministic(self, unit_square, tmp_path):
        a = triangulate(PolygonalDomain.from_polygon(L_SHAPE), 0.01)
        b = triangulate(PolygonalDomain.from_polygon(L_SHAPE), 0.01)
        a.save(tmp_path / "a.npz")
        b.save(tmp_path / "b.npz")
        assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
        back = geometry.Triangulation.load(tmp_path / "a.npz")
        np.testing.assert_array_equal(back.triangles, a.triangles)
        assert back.min_angle == a.min_angle
