"""Polygons, point-in-domain tests and quality triangulation.

Coordinates are double-precision meters.  Domains are open sets: a point that
lies exactly on an outer or hole boundary is *not* contained.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from ._io import atomic_write, save_npz
from ._mesher import Mesher
from .errors import DegenerateTriangle, InvalidRegion

logger = logging.getLogger(__name__)

DEFAULT_MIN_ANGLE = math.radians(20.0)
DEFAULT_MAX_INSERTIONS = 10**7

_CHUNK = 2_000_000


def _signed_area(xy):
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p0, p1, q0, q1):
    """Vectorised closed-segment intersection test (broadcasting)."""

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
            b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    def on_box(a, b, c):
        return ((np.minimum(a[..., 0], b[..., 0]) <= c[..., 0])
                & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0]))
                & (np.minimum(a[..., 1], b[..., 1]) <= c[..., 1])
                & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1])))

    d1 = orient(q0, q1, p0)
    d2 = orient(q0, q1, p1)
    d3 = orient(p0, p1, q0)
    d4 = orient(p0, p1, q1)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)
    touch = (((d1 == 0) & on_box(q0, q1, p0)) | ((d2 == 0) & on_box(q0, q1, p1))
             | ((d3 == 0) & on_box(p0, p1, q0)) | ((d4 == 0) & on_box(p0, p1, q1)))
    return proper | touch


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple polygon with counter-clockwise vertices (no repeated closing vertex)."""

    vertices: tuple

    xy: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", pts)
        if len(pts) < 3:
            raise InvalidRegion(f"polygon needs at least 3 vertices, got {len(pts)}")
        xy = np.asarray(pts, dtype=float)
        if not np.all(np.isfinite(xy)):
            raise InvalidRegion("polygon has non-finite coordinates")
        if np.any(np.all(xy == np.roll(xy, -1, axis=0), axis=1)):
            raise InvalidRegion("polygon has repeated consecutive vertices")
        if _signed_area(xy) <= 0.0:
            raise InvalidRegion("polygon must be counter-clockwise with positive area")
        xy.setflags(write=False)
        object.__setattr__(self, "xy", xy)
        if not self._is_simple():
            raise InvalidRegion("polygon boundary self-intersects")

    @classmethod
    def ccw(cls, points: Sequence) -> "Polygon":
        """Build a polygon, reversing the vertex order if it is clockwise."""
        xy = np.asarray(points, dtype=float)
        if len(xy) >= 3 and _signed_area(xy) < 0:
            xy = xy[::-1]
        return cls(tuple(map(tuple, xy)))

    def _is_simple(self):
        n = len(self.xy)
        p0 = self.xy
        p1 = np.roll(self.xy, -1, axis=0)
        i, j = np.triu_indices(n, k=2)
        # first and last edges share a vertex
        keep = ~((i == 0) & (j == n - 1))
        i, j = i[keep], j[keep]
        if len(i) == 0:
            return True
        hit = _segments_cross(p0[i], p1[i], p0[j], p1[j])
        return not bool(np.any(hit))

    @property
    def area(self) -> float:
        return _signed_area(self.xy)

    @property
    def centroid(self) -> np.ndarray:
        x, y = self.xy[:, 0], self.xy[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = cross.sum() / 2.0
        return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)

    @property
    def diameter(self) -> float:
        d = self.xy[:, None, :] - self.xy[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def interior_angles(self) -> np.ndarray:
        """Interior angle at each vertex, in radians."""
        prev = np.roll(self.xy, 1, axis=0) - self.xy
        nxt = np.roll(self.xy, -1, axis=0) - self.xy
        ang = np.arctan2(prev[:, 1], prev[:, 0]) - np.arctan2(nxt[:, 1], nxt[:, 0])
        return np.mod(ang, 2 * np.pi)

    def edges(self):
        return self.xy, np.roll(self.xy, -1, axis=0)

    def to_list(self):
        return [list(p) for p in self.vertices]


@dataclass(frozen=True, eq=False)
class PolygonalDomain:
    """Open polygon-with-holes."""

    outer: Polygon
    holes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))
        if self.area <= 0:
            raise InvalidRegion("holes cover the whole outer polygon")
        rings = (self.outer,) + self.holes
        for k, h in enumerate(self.holes):
            inside = _contains_ring(self.outer.xy, h.xy)
            if not np.all(inside == 1):
                raise InvalidRegion(f"hole {k} is not strictly inside the outer polygon")
        for a in range(len(rings)):
            for b in range(a + 1, len(rings)):
                pa0, pa1 = rings[a].edges()
                pb0, pb1 = rings[b].edges()
                hit = _segments_cross(pa0[:, None], pa1[:, None], pb0[None], pb1[None])
                if np.any(hit):
                    raise InvalidRegion("domain boundaries intersect")
                if a > 0 and np.any(_contains_ring(rings[a].xy, rings[b].xy[:1]) == 1):
                    raise InvalidRegion("holes overlap")
                if a > 0 and np.any(_contains_ring(rings[b].xy, rings[a].xy[:1]) == 1):
                    raise InvalidRegion("holes overlap")

    @classmethod
    def from_polygon(cls, points: Sequence) -> "PolygonalDomain":
        return cls(Polygon.ccw(points))

    @property
    def area(self) -> float:
        return self.outer.area - sum(h.area for h in self.holes)

    @property
    def rings(self):
        return (self.outer,) + self.holes

    def min_boundary_angle(self) -> float:
        """Smallest angle of the domain at a boundary vertex (radians)."""
        angles = [self.outer.interior_angles()]
        angles += [2 * np.pi - h.interior_angles() for h in self.holes]
        return float(np.concatenate(angles).min())

    def to_json(self) -> dict:
        return {"outer": self.outer.to_list(), "holes": [h.to_list() for h in self.holes]}

    @classmethod
    def from_json(cls, data: dict) -> "PolygonalDomain":
        try:
            outer = Polygon.ccw(data["outer"])
            holes = tuple(Polygon.ccw(h) for h in data.get("holes", []))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidRegion):
                raise
            raise InvalidRegion(f"malformed domain JSON: {exc}") from exc
        return cls(outer, holes)


def load_domain(path) -> PolygonalDomain:
    with open(path) as fh:
        return PolygonalDomain.from_json(json.load(fh))


def save_domain(domain: PolygonalDomain, path) -> None:
    atomic_write(path, json.dumps(domain.to_json()))


def unit_square() -> PolygonalDomain:
    return rectangle(0.0, 1.0, 0.0, 1.0)


def rectangle(xmin, xmax, ymin, ymax) -> PolygonalDomain:
    return PolygonalDomain(Polygon(((xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax))))


# ----------------------------------------------------------------- contains
def _contains_ring(ring, pts):
    """Even-odd test against one ring: 1 inside, 0 outside, -1 on the boundary."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.zeros(len(pts), dtype=np.int8)
    x0 = ring[:, 0]
    y0 = ring[:, 1]
    x1 = np.roll(x0, -1)
    y1 = np.roll(y0, -1)
    step = max(1, _CHUNK // len(ring))
    for s in range(0, len(pts), step):
        px = pts[s:s + step, 0:1]
        py = pts[s:s + step, 1:2]
        cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        up = y1 > y0
        straddle = (y0 > py) != (y1 > py)
        crossing = straddle & ((cross > 0) == up)
        odd = (np.count_nonzero(crossing, axis=1) % 2).astype(bool)
        on_edge = ((cross == 0)
                   & (np.minimum(x0, x1) <= px) & (px <= np.maximum(x0, x1))
                   & (np.minimum(y0, y1) <= py) & (py <= np.maximum(y0, y1)))
        res = odd.astype(np.int8)
        res[np.any(on_edge, axis=1)] = -1
        out[s:s + step] = res
    return out


def contains(region: PolygonalDomain, p) -> bool | np.ndarray:
    """Membership in the open domain (inside the outer ring, outside every hole).

    Accepts a single point ``(x, y)`` or an ``(n, 2)`` array; boundary points
    return ``False``.
    """
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    inside = _contains_ring(region.outer.xy, pts) == 1
    for h in region.holes:
        if not inside.any():
            break
        inside &= _contains_ring(h.xy, pts) == 0
    return bool(inside[0]) if single else inside


class Rectangle(NamedTuple):
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)


def bounding_rectangle(region: PolygonalDomain) -> Rectangle:
    lo = region.outer.xy.min(axis=0)
    hi = region.outer.xy.max(axis=0)
    return Rectangle(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))


# ---------------------------------------------------------------- triangles
class TriangleMetrics(NamedTuple):
    area: float
    diameter: float
    min_angle: float
    min_edge: float

    @property
    def shape_constant(self) -> float:
        """``c`` with ``area >= c * diameter**2`` implied by the min angle."""
        return 0.5 * math.sin(self.min_angle) * self.min_edge / self.diameter


@dataclass(frozen=True)
class Triangle:
    a: tuple
    b: tuple
    c: tuple

    @property
    def vertices(self):
        return (self.a, self.b, self.c)


def triangle_metrics(t: Triangle) -> TriangleMetrics:
    (ax, ay), (bx, by), (cx, cy) = t.vertices
    area = 0.5 * abs((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))
    if not area > 0.0:
        raise DegenerateTriangle(f"triangle {t.vertices} has zero area")
    lengths = sorted([math.hypot(bx - cx, by - cy), math.hypot(cx - ax, cy - ay),
                      math.hypot(ax - bx, ay - by)])
    s, m, l = lengths
    cos_t = (m * m + l * l - s * s) / (2.0 * m * l)
    return TriangleMetrics(area, l, math.acos(min(1.0, max(-1.0, cos_t))), s)


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Triangle mesh stored as a vertex array plus CCW index triples."""

    vertices: np.ndarray
    triangles: np.ndarray
    min_angle: float
    max_area: float

    def __post_init__(self):
        for name in ("vertices", "triangles"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.triangles)

    def __iter__(self):
        for k in range(len(self)):
            yield self.triangle(k)

    def triangle(self, k) -> Triangle:
        a, b, c = (tuple(map(float, self.vertices[i])) for i in self.triangles[k])
        return Triangle(a, b, c)

    @property
    def corners(self) -> np.ndarray:
        """``(n, 3, 2)`` array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    @property
    def areas(self) -> np.ndarray:
        p = self.corners
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        """``(n, 3)`` edge lengths, each opposite the corresponding corner."""
        p = self.corners
        return np.stack([np.linalg.norm(p[:, 1] - p[:, 2], axis=1),
                         np.linalg.norm(p[:, 2] - p[:, 0], axis=1),
                         np.linalg.norm(p[:, 0] - p[:, 1], axis=1)], axis=1)

    @property
    def diameters(self) -> np.ndarray:
        return self.edge_lengths().max(axis=1)

    @property
    def min_angles(self) -> np.ndarray:
        s, m, l = np.sort(self.edge_lengths(), axis=1).T
        cos_t = (m * m + l * l - s * s) / (2.0 * m * l)
        return np.arccos(np.clip(cos_t, -1.0, 1.0))

    @property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    def stats(self) -> dict:
        areas = self.areas
        return {
            "triangles": len(self),
            "vertices": len(self.vertices),
            "min_angle_deg": math.degrees(float(self.min_angles.min())),
            "max_area": float(areas.max()),
            "area_sum": float(areas.sum()),
        }

    def save(self, path) -> None:
        """Write an ``.npz`` file; identical meshes give identical bytes."""
        save_npz(path, vertices=self.vertices, triangles=self.triangles,
                 min_angle=self.min_angle, max_area=self.max_area)

    @classmethod
    def load(cls, path) -> "Triangulation":
        with np.load(path) as data:
            return cls(data["vertices"], data["triangles"],
                       float(data["min_angle"]), float(data["max_area"]))


def _structured(region, max_area, min_angle):
    xy = region.outer.xy
    box = bounding_rectangle(region)
    is_rect = (not region.holes and len(xy) == 4
               and np.all(np.isin(xy[:, 0], (box.xmin, box.xmax)))
               and np.all(np.isin(xy[:, 1], (box.ymin, box.ymax))))
    if not is_rect:
        raise InvalidRegion("structured triangulation needs an axis-aligned rectangle")
    lx = box.xmax - box.xmin
    ly = box.ymax - box.ymin
    side = math.sqrt(2.0 * max_area)
    nx = max(1, math.ceil(lx / side * (1 - 1e-12)))
    ny = max(1, math.ceil(ly / side * (1 - 1e-12)))
    while (lx / nx) * (ly / ny) / 2.0 > max_area * (1 + 1e-12):
        nx += 1
        ny += 1
    gx = np.linspace(box.xmin, box.xmax, nx + 1)
    gy = np.linspace(box.ymin, box.ymax, ny + 1)
    gx[-1], gy[-1] = box.xmax, box.ymax
    X, Y = np.meshgrid(gx, gy)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    tris = np.concatenate([np.column_stack([v00, v10, v11]),
                           np.column_stack([v00, v11, v01])])
    t = Triangulation(verts, tris, min_angle, max_area)
    if t.min_angles.min() < min_angle * (1 - 1e-12):
        raise InvalidRegion("cell aspect ratio violates min_angle; use method='ruppert'")
    return t


def triangulate(region: PolygonalDomain, max_area: float,
                min_angle: float | None = None, *, method: str = "ruppert",
                max_insertions: int = DEFAULT_MAX_INSERTIONS) -> Triangulation:
    """Quality triangulation of a polygon-with-holes.

    Parameters
    ----------
    region
        Domain to mesh.
    max_area
        Upper bound on every triangle area (m^2).
    min_angle
        Lower bound on every interior angle, radians.  Defaults to 20 degrees,
        or the domain's sharpest boundary angle if that is smaller.
    method
        ``"ruppert"`` (constrained Delaunay plus refinement) or
        ``"structured"`` (uniform right-triangle mesh, axis-aligned rectangles
        only, much faster for very fine meshes).
    max_insertions
        Steiner point budget; exceeding it raises ``NonTerminatingRefinement``.
    """
    if not max_area > 0:
        raise InvalidRegion("max_area must be positive")
    sharpest = region.min_boundary_angle()
    if min_angle is None:
        min_angle = min(DEFAULT_MIN_ANGLE, sharpest)
    if not 0 < min_angle < math.pi / 3:
        raise InvalidRegion("min_angle must lie in (0, 60) degrees")
    if min_angle > sharpest * (1 + 1e-12):
        raise InvalidRegion(
            f"min_angle {math.degrees(min_angle):.3f} deg exceeds the sharpest "
            f"boundary angle {math.degrees(sharpest):.3f} deg")
    if method == "structured":
        return _structured(region, max_area, min_angle)
    if method != "ruppert":
        raise ValueError(f"unknown triangulation method {method!r}")

    mesher = Mesher(max_area, min_angle, max_insertions)
    mesher.build([r.xy for r in region.rings])
    mesher.refine()
    verts, tris = mesher.result()
    t = Triangulation(verts, tris, min_angle, max_area)
    logger.debug("triangulated region: %s", t.stats())
    return t
