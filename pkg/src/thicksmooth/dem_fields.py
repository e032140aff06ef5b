"""Floe snapshots from a discrete element model and the fields built from them.

Each floe contributes one piece per field:

* mass density ``rho * a`` (kg/m^2),
* rigid-body velocity ``u + omega * perp(y - xi)`` (m/s),
* stress resultant ``sum_i (r_i f_i^T + f_i r_i^T)`` with ``r_i = z_i - xi``,
  stored as ``(s11, s12, s22)``.

The stress sign follows the input forces: with forces recorded as the push a
floe receives, converging contacts give a negative trace.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import Voronoi

from ._io import atomic_write
from .errors import InvalidRegion, InvariantViolation, SchemaError, ValidationError
from .geometry import Polygon, PolygonalDomain, bounding_rectangle, contains, triangulate
from .operators import FieldPiece, PiecewiseField
from .quadrature import QuadratureRule, make_rng, rule_from_triangulation

logger = logging.getLogger(__name__)

UNITS = {"length": "m", "time": "s", "thickness": "m", "velocity": "m/s",
         "angular_velocity": "rad/s", "force": "N"}

#: contact points farther than this fraction of the floe diameter from its
#: boundary are rejected
CONTACT_TOL = 0.05
#: centre-of-mass offsets above this fraction of the diameter are warned about
CENTROID_TOL = 0.01


def perp(r):
    """Counter-clockwise rotation by 90 degrees: ``(r1, r2) -> (-r2, r1)``."""
    r = np.asarray(r, dtype=float)
    return np.stack([-r[..., 1], r[..., 0]], axis=-1)


def _segment_distance(poly: Polygon, z):
    a, b = poly.edges()
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", z - a, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
    return float(np.min(np.hypot(*(a + t[:, None] * ab - z).T)))


@dataclass(frozen=True, eq=False)
class Contact:
    z: tuple
    f: tuple


@dataclass(frozen=True, eq=False)
class Floe:
    """Rigid polygonal floe.

    ``omega`` is positive counter-clockwise; ``contacts`` are ``(z, f)`` pairs
    with the contact point in meters and the force in newtons.
    """

    polygon: Polygon
    a: float
    xi: tuple
    u: tuple
    omega: float
    contacts: tuple = ()

    def __post_init__(self):
        nums = [self.a, self.omega, *self.xi, *self.u]
        nums += [v for c in self.contacts for v in (*c.z, *c.f)]
        if not all(math.isfinite(v) for v in nums):
            raise InvariantViolation("floe has non-finite values")
        if not self.a > 0:
            raise InvariantViolation(f"floe thickness must be positive, got {self.a}")
        diam = self.polygon.diameter
        off = float(np.hypot(*(np.asarray(self.xi) - self.polygon.centroid)))
        if off > CENTROID_TOL * diam:
            logger.warning("floe centre of mass is %.3g m from the polygon centroid", off)
        for c in self.contacts:
            z = np.asarray(c.z, dtype=float)
            if _segment_distance(self.polygon, z) > CONTACT_TOL * diam:
                raise InvariantViolation(f"contact point {list(c.z)} is far from the floe boundary")

    @property
    def area(self) -> float:
        return self.polygon.area

    def to_json(self) -> dict:
        return {"poly": self.polygon.to_list(), "a": self.a, "xi": list(self.xi),
                "u": list(self.u), "omega": self.omega,
                "contacts": [{"z": list(c.z), "f": list(c.f)} for c in self.contacts]}


@dataclass(frozen=True, eq=False)
class FloeSnapshot:
    time: float
    floes: tuple = ()

    def to_json(self) -> dict:
        return {"t": self.time, "floes": [f.to_json() for f in self.floes]}

    def check_domain(self, domain: PolygonalDomain, tol: float = 0.0) -> int:
        """Count floe vertices outside the domain closure and warn about them."""
        from .thickness import boundary_distance

        bad = []
        for k, f in enumerate(self.floes):
            outside = ~contains(domain, f.polygon.xy)
            if np.any(outside):
                far = [p for p in f.polygon.xy[outside] if boundary_distance(domain, p) > tol]
                if far:
                    bad.append(k)
        if bad:
            logger.warning("%d floe(s) poke out of the domain at t=%g (first: %s)",
                           len(bad), self.time, bad[:10])
        return len(bad)


# ------------------------------------------------------------------- fields
def floe_rules(snapshot: FloeSnapshot, max_area: float,
               min_angle: float | None = None) -> list:
    """Centroid quadrature rule for each floe polygon."""
    rules = []
    for f in snapshot.floes:
        region = PolygonalDomain(f.polygon)
        rules.append(rule_from_triangulation(triangulate(region, max_area, min_angle)))
    return rules


def _check_rules(snapshot, rules):
    if len(rules) != len(snapshot.floes):
        raise ValidationError("need one quadrature rule per floe")


def mass_density_field(snapshot: FloeSnapshot, rho: float,
                       rules: Sequence[QuadratureRule]) -> PiecewiseField:
    """One constant piece ``rho * a`` (kg/m^2) per floe."""
    if not rho > 0:
        raise ValidationError("ice density rho must be positive")
    _check_rules(snapshot, rules)
    pieces = [FieldPiece(f.polygon, r, np.full((len(r), 1), rho * f.a))
              for f, r in zip(snapshot.floes, rules)]
    return PiecewiseField(tuple(pieces), 1)


def velocity_field(snapshot: FloeSnapshot, rules: Sequence[QuadratureRule]) -> PiecewiseField:
    """Rigid-body velocity ``u + omega * perp(y - xi)`` at each node (m/s)."""
    _check_rules(snapshot, rules)
    pieces = []
    for f, r in zip(snapshot.floes, rules):
        rel = r.nodes - np.asarray(f.xi, dtype=float)
        v = np.asarray(f.u, dtype=float) + f.omega * perp(rel)
        pieces.append(FieldPiece(f.polygon, r, v))
    return PiecewiseField(tuple(pieces), 2)


def floe_stress(floe: Floe, area_normalize: bool = False) -> np.ndarray:
    """``(s11, s12, s22)`` of ``sum_i (r_i f_i^T + f_i r_i^T)`` with ``r_i = z_i - xi``."""
    s11 = s12 = s22 = 0.0
    xi = floe.xi
    for c in floe.contacts:
        r1, r2 = c.z[0] - xi[0], c.z[1] - xi[1]
        f1, f2 = c.f
        s11 += 2.0 * r1 * f1
        s12 += r1 * f2 + f1 * r2
        s22 += 2.0 * r2 * f2
    out = np.array([s11, s12, s22])
    return out / floe.area if area_normalize else out


def stress_field(snapshot: FloeSnapshot, rules: Sequence[QuadratureRule],
                 area_normalize: bool = False) -> PiecewiseField:
    """Constant symmetric stress resultant per floe (N m, or N/m if normalized)."""
    _check_rules(snapshot, rules)
    pieces = [FieldPiece(f.polygon, r, np.tile(floe_stress(f, area_normalize), (len(r), 1)))
              for f, r in zip(snapshot.floes, rules)]
    return PiecewiseField(tuple(pieces), 3)


# ------------------------------------------------------------------- file IO
def _fail(msg, line, fld):
    raise SchemaError(msg, line=line, field=fld)


def _vec(obj, key, line, where, n=2):
    val = obj.get(key) if isinstance(obj, dict) else None
    if (not isinstance(val, list) or len(val) != n
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val)):
        _fail(f"expected a list of {n} numbers", line, f"{where}.{key}")
    return tuple(float(v) for v in val)


def _num(obj, key, line, where):
    val = obj.get(key)
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        _fail("expected a number", line, f"{where}.{key}")
    return float(val)


def _parse_floe(obj, line, where):
    if not isinstance(obj, dict):
        _fail("floe must be an object", line, where)
    poly = obj.get("poly")
    if (not isinstance(poly, list) or len(poly) < 3
            or not all(isinstance(p, list) and len(p) == 2 for p in poly)):
        _fail("polygon needs at least 3 [x, y] vertices", line, f"{where}.poly")
    try:
        polygon = Polygon.ccw(poly)
    except (InvalidRegion, TypeError, ValueError) as exc:
        _fail(f"invalid polygon: {exc}", line, f"{where}.poly")
    contacts = obj.get("contacts", [])
    if not isinstance(contacts, list):
        _fail("contacts must be a list", line, f"{where}.contacts")
    cs = []
    for i, c in enumerate(contacts):
        cw = f"{where}.contacts[{i}]"
        if not isinstance(c, dict):
            _fail("contact must be an object", line, cw)
        cs.append(Contact(_vec(c, "z", line, cw), _vec(c, "f", line, cw)))
    try:
        return Floe(polygon, _num(obj, "a", line, where), _vec(obj, "xi", line, where),
                    _vec(obj, "u", line, where), _num(obj, "omega", line, where), tuple(cs))
    except InvariantViolation as exc:
        raise InvariantViolation(f"line {line}, {where}: {exc}") from exc


def load_snapshots(path) -> list:
    """Read a JSON Lines snapshot file (units header, then one snapshot per line)."""
    snaps = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        _fail("empty file; expected a units header", 1, "units")
    for no, text in enumerate(lines, start=1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            _fail(f"invalid JSON: {exc.msg}", no, None)
        if no == 1:
            units = obj.get("units") if isinstance(obj, dict) else None
            if not isinstance(units, dict):
                _fail("first line must be a units header", no, "units")
            for key, want in UNITS.items():
                if units.get(key) != want:
                    _fail(f"unit mismatch: expected {want!r}, got {units.get(key)!r}",
                          no, f"units.{key}")
            continue
        if not isinstance(obj, dict):
            _fail("snapshot must be an object", no, None)
        t = _num(obj, "t", no, "snapshot")
        floes = obj.get("floes")
        if not isinstance(floes, list):
            _fail("expected a list of floes", no, "floes")
        snaps.append(FloeSnapshot(t, tuple(_parse_floe(f, no, f"floes[{i}]")
                                           for i, f in enumerate(floes))))
    snaps.sort(key=lambda s: s.time)
    return snaps


def save_snapshots(path, snapshots: Sequence[FloeSnapshot]) -> None:
    """Write snapshots atomically; floats use shortest round-trip repr."""
    lines = [json.dumps({"units": UNITS})]
    lines += [json.dumps(s.to_json()) for s in snapshots]
    atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- synthesis
def _voronoi_cells(sites, box):
    """Voronoi cells of ``sites`` clipped to ``box`` by mirroring across its sides."""
    xmin, xmax, ymin, ymax = box
    mirrored = [sites]
    for axis, lo, hi in ((0, xmin, xmax), (1, ymin, ymax)):
        for edge in (lo, hi):
            m = sites.copy()
            m[:, axis] = 2 * edge - m[:, axis]
            mirrored.append(m)
    vor = Voronoi(np.concatenate(mirrored))
    cells = []
    for i in range(len(sites)):
        region = vor.regions[vor.point_region[i]]
        pts = vor.vertices[region]
        pts[:, 0] = np.clip(pts[:, 0], xmin, xmax)
        pts[:, 1] = np.clip(pts[:, 1], ymin, ymax)
        c = pts.mean(axis=0)
        order = np.argsort(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))
        cells.append(pts[order])
    return cells, vor


def _clean(pts, rel=1e-3):
    """Drop vertices closing very short edges."""
    diam = float(np.max(np.ptp(pts, axis=0)))
    keep = [pts[0]]
    for p in pts[1:]:
        if np.hypot(*(p - keep[-1])) > rel * diam:
            keep.append(p)
    if len(keep) > 3 and np.hypot(*(keep[0] - keep[-1])) <= rel * diam:
        keep.pop()
    return np.array(keep)


def _polygon_centroid(pts):
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6 * a)


def synthesize_floes(domain: PolygonalDomain, count: int, seed: int,
                     packing: str = "dense", lloyd_steps: int = 2,
                     time: float = 0.0) -> FloeSnapshot:
    """Seeded synthetic floe field from shrunken Voronoi cells.

    Sites are drawn uniformly in the domain and relaxed by ``lloyd_steps``
    Lloyd iterations.  Cells are shrunk toward their centroids (by 0.95 for
    ``dense``, 0.7 for ``sparse``).  Each pair of neighbouring cells gets one
    contact at the shared edge midpoint, projected onto each shrunken floe,
    with equal and opposite forces.  Cells not entirely inside the domain are
    dropped, so non-rectangular domains may yield fewer than ``count`` floes.
    """
    if count < 1:
        raise ValidationError("count must be at least 1")
    shrink = {"dense": 0.95, "sparse": 0.7}.get(packing)
    if shrink is None:
        raise ValidationError(f"unknown packing {packing!r}")
    rng = make_rng(seed)
    box = bounding_rectangle(domain)
    lo = np.array([box.xmin, box.ymin])
    span = np.array([box.xmax - box.xmin, box.ymax - box.ymin])
    sites = []
    while len(sites) < count:
        p = lo + span * rng.random(2)
        if contains(domain, p):
            sites.append(p)
    sites = np.array(sites)
    for _ in range(lloyd_steps):
        cells, _ = _voronoi_cells(sites, box)
        sites = np.array([_polygon_centroid(c) for c in cells])
    cells, vor = _voronoi_cells(sites, box)

    shapes = []
    centroids = []
    for c in cells:
        c = _clean(c)
        g = _polygon_centroid(c)
        centroids.append(g)
        shapes.append(g + shrink * (c - g))
    keep = [all(contains(domain, shapes[i])) for i in range(count)]

    contacts = [[] for _ in range(count)]
    for (i, j), ridge in zip(vor.ridge_points, vor.ridge_vertices):
        if i >= count or j >= count or -1 in ridge or not (keep[i] and keep[j]):
            continue
        mid = vor.vertices[ridge].mean(axis=0)
        n = centroids[j] - centroids[i]
        n /= np.hypot(*n)
        t = np.array([-n[1], n[0]])
        mag = float(rng.uniform(1e5, 1e6))
        shear = float(rng.normal(0.0, 0.2 * mag))
        # push i away from j; j receives the reaction
        f = -mag * n + shear * t
        zi = centroids[i] + shrink * (mid - centroids[i])
        zj = centroids[j] + shrink * (mid - centroids[j])
        contacts[i].append(Contact(tuple(zi), tuple(f)))
        contacts[j].append(Contact(tuple(zj), tuple(-f)))

    floes = []
    for i in range(count):
        if not keep[i]:
            continue
        poly = Polygon.ccw(shapes[i])
        g = poly.centroid
        floes.append(Floe(
            poly, float(rng.uniform(0.5, 3.0)), (float(g[0]), float(g[1])),
            (float(rng.normal(0, 0.1)), float(rng.normal(0, 0.1))),
            float(rng.normal(0, 1e-6)), tuple(contacts[i])))
    return FloeSnapshot(float(time), tuple(floes))


def total_contact_force(snapshot: FloeSnapshot) -> np.ndarray:
    """Exactly rounded sum of all contact forces (N)."""
    fx = math.fsum(c.f[0] for fl in snapshot.floes for c in fl.contacts)
    fy = math.fsum(c.f[1] for fl in snapshot.floes for c in fl.contacts)
    return np.array([fx, fy])
