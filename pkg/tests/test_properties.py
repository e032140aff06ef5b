"""Property-based checks of the invariants each module promises."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thicksmooth import geometry, operators, quadrature, thickness
from thicksmooth.dem_fields import Contact, Floe, FloeSnapshot, floe_stress, velocity_field
from thicksmooth.geometry import Polygon
from thicksmooth.kernels import ScaledKernel, kernel_eval

coord = st.floats(-5, 5, allow_nan=False)
point = st.tuples(coord, coord)
eps_st = st.floats(0.01, 2.0)
unit = st.floats(0.0, 1.0)


@st.composite
def star_polygons(draw, min_vertices=3, max_vertices=9):
    """Star-shaped simple polygons around the origin."""
    n = draw(st.integers(min_vertices, max_vertices))
    gaps = draw(st.lists(st.floats(0.3, 1.0), min_size=n, max_size=n))
    radii = draw(st.lists(st.floats(0.3, 1.0), min_size=n, max_size=n))
    angles = np.cumsum(gaps) / sum(gaps) * 2 * math.pi
    return [(r * math.cos(a), r * math.sin(a)) for r, a in zip(radii, angles)]


# ------------------------------------------------------------------ kernels
@given(point, point, eps_st, st.sampled_from(["gaussian", "tophat"]))
def test_kernel_symmetric(x, y, eps, kind):
    k = getattr(ScaledKernel, kind)(eps)
    assert kernel_eval(k, x, y) == kernel_eval(k, y, x)


@given(point, point, point, eps_st)
def test_kernel_translation_invariant(x, y, t, eps):
    k = ScaledKernel.gaussian(eps)
    a = kernel_eval(k, x, y)
    b = kernel_eval(k, np.add(x, t), np.add(y, t))
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12 * kernel_eval(k, x, x))


@given(point, point, eps_st)
def test_kernel_nonnegative_and_peaked(x, y, eps):
    k = ScaledKernel.gaussian(eps)
    assert 0.0 <= kernel_eval(k, x, y) <= kernel_eval(k, x, x)


# ----------------------------------------------------------------- geometry
@settings(max_examples=25)
@given(star_polygons(), st.floats(0.005, 0.1))
def test_triangulation_conserves_area(pts, max_area):
    domain = geometry.PolygonalDomain.from_polygon(pts)
    t = geometry.triangulate(domain, max_area)
    assert math.fsum(t.areas) == pytest.approx(domain.area, rel=1e-10)
    assert t.areas.max() <= max_area * (1 + 1e-9)
    assert np.all(t.areas > 0)


@settings(max_examples=25)
@given(star_polygons(), st.floats(0.01, 0.1))
def test_contains_agrees_with_triangulation(pts, max_area):
    domain = geometry.PolygonalDomain.from_polygon(pts)
    t = geometry.triangulate(domain, max_area)
    assert np.all(geometry.contains(domain, t.centroids))


# -------------------------------------------------------------------- floes
@given(point, st.floats(-3, 3), st.floats(0.1, 5.0))
def test_rigid_body_velocity(u, omega, side):
    h = side / 2
    floe = Floe(Polygon.ccw([(-h, -h), (h, -h), (h, h), (-h, h)]), 1.0, (0.0, 0.0), u, omega)
    snap = FloeSnapshot(0.0, (floe,))
    rules = [quadrature.rule_for_region(geometry.PolygonalDomain(floe.polygon), side**2 / 8)]
    fld = velocity_field(snap, rules)
    r = fld.nodes
    expected = np.asarray(u) + omega * np.column_stack([-r[:, 1], r[:, 0]])
    np.testing.assert_allclose(fld.values, expected, rtol=1e-12, atol=1e-12 * (1 + abs(omega)))


contact_st = st.tuples(st.floats(-1, 1), st.sampled_from([-1.0, 1.0]),
                       st.floats(-10, 10), st.floats(-10, 10), st.booleans())


@given(st.lists(contact_st, max_size=6))
def test_stress_symmetric_reading(raw):
    contacts = []
    for s, side, fx, fy, vertical in raw:
        z = (side, s) if vertical else (s, side)
        contacts.append(Contact(z, (fx, fy)))
    floe = Floe(Polygon.ccw([(-1, -1), (1, -1), (1, 1), (-1, 1)]), 1.0, (0.0, 0.0),
                (0.0, 0.0), 0.0, tuple(contacts))
    sxx, sxy, syy = floe_stress(floe)
    full = np.zeros((2, 2))
    for c in contacts:
        full += np.outer(c.z, c.f) + np.outer(c.f, c.z)
    np.testing.assert_allclose([sxx, sxy, syy], [full[0, 0], full[0, 1], full[1, 1]],
                               atol=1e-12)
    trace = 2 * math.fsum(float(np.dot(c.z, c.f)) for c in contacts)
    assert sxx + syy == pytest.approx(trace, abs=1e-9)


# ---------------------------------------------------------------- operators
@pytest.fixture(scope="module")
def halves():
    """Unit square as left/right halves sharing nodes with the domain rule."""
    left = geometry.rectangle(0, 0.5, 0, 1)
    right = geometry.rectangle(0.5, 1, 0, 1)
    rl = quadrature.rule_for_region(left, 2e-3, method="structured")
    rr = quadrature.rule_for_region(right, 2e-3, method="structured")
    ctx = operators.SmoothingContext(geometry.unit_square(), rl.union(rr),
                                     ScaledKernel.gaussian(0.08))
    return ctx, (left, rl), (right, rr)


def two_piece(halves, a, b):
    _, (left, rl), (right, rr) = halves
    return operators.PiecewiseField(
        (operators.FieldPiece(left.outer, rl, a), operators.FieldPiece(right.outer, rr, b)), 1)


probe = st.tuples(unit, unit)
value = st.floats(-100, 100)


@given(value, value, value, value, value, value, probe)
def test_smoothing_linear(halves, a1, b1, a2, b2, s, t, x):
    ctx = halves[0]
    f = two_piece(halves, a1, b1)
    g = two_piece(halves, a2, b2)
    h = two_piece(halves, s * a1 + t * a2, s * b1 + t * b2)
    for smooth in (operators.markov_smooth, operators.bistochastic_smooth):
        lhs = smooth(ctx, h, x)
        rhs = s * smooth(ctx, f, x) + t * smooth(ctx, g, x)
        scale = max(1.0, abs(s) * max(abs(a1), abs(b1)) + abs(t) * max(abs(a2), abs(b2)))
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * scale)


@given(value, value, probe)
def test_markov_bounded_by_extremes(halves, a, b, x):
    ctx = halves[0]
    val = float(operators.markov_smooth(ctx, two_piece(halves, a, b), x)[0])
    tol = 1e-12 * max(1.0, abs(a), abs(b))
    assert min(a, b) - tol <= val <= max(a, b) + tol


@given(value, value, st.lists(probe, min_size=1, max_size=8))
def test_sup_norm_contraction(halves, a, b, pts):
    ctx = halves[0]
    vals = operators.markov_smooth(ctx, two_piece(halves, a, b), pts)
    assert np.max(np.abs(vals)) <= max(abs(a), abs(b)) * (1 + 1e-12)


@given(probe)
def test_degree_is_a_density(halves, x):
    deg = float(operators.degree(halves[0], x))
    assert 0.0 < deg <= 1.0 + 1e-12


# ---------------------------------------------------------------- thickness
@st.composite
def interval_unions(draw):
    ends = sorted(draw(st.lists(st.fractions(0, 10, max_denominator=50),
                                min_size=2, max_size=10, unique=True)))
    ends = ends[: len(ends) // 2 * 2]
    return thickness.IntervalUnionSet.union_of(list(zip(ends[::2], ends[1::2])))


@given(interval_unions(), st.fractions(-1, 11, max_denominator=50),
       st.fractions(1, 5, max_denominator=50).filter(lambda r: r > 0))
def test_interval_density_in_unit_range(s, x, eps):
    d = thickness.tophat_density(s, x, eps)
    assert 0 <= d <= 1


@given(interval_unions(), interval_unions())
def test_interval_union_measure_subadditive(a, b):
    u = a.union(b)
    assert max(a.measure(), b.measure()) <= u.measure() <= a.measure() + b.measure()


@settings(max_examples=15)
@given(star_polygons(), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(0.02, 0.5))
def test_planar_density_in_unit_range(pts, x, y, eps):
    domain = geometry.PolygonalDomain.from_polygon(pts)
    d = thickness.tophat_density(domain, (x, y), eps, samples=2000)
    assert 0.0 <= d <= 1.0
