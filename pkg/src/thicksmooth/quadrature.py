"""Quadrature rules over polygonal regions and their error estimates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._io import save_npz
from .errors import (InsufficientSamples, NonFiniteIntegrand, RejectionStall,
                     UnsupportedShape, ValidationError)
from .geometry import PolygonalDomain, Triangulation, bounding_rectangle, contains
from .kernels import ScaledKernel, ShapeKind, radial_derivative_sup

RNG_ALGORITHM = "numpy.random.Philox"

STALL_TRIALS = 10**6
STALL_RATIO = 1e-4


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; streams are identical across platforms."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and positive weights approximating integration over a region.

    For triangulation rules ``diameters`` holds the diameter of the triangle
    behind each node and ``moments`` its mean squared distance from the
    centroid; both feed the a-priori error bounds and are ``None`` for Monte
    Carlo rules.
    """

    nodes: np.ndarray
    weights: np.ndarray
    provenance: dict
    region_area: float
    diameters: np.ndarray | None = None
    bounding_area: float | None = None
    moments: np.ndarray | None = None

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, 2)
        weights = np.ascontiguousarray(self.weights, dtype=float).reshape(-1)
        if len(nodes) != len(weights):
            raise ValidationError("nodes and weights differ in length")
        if np.any(~(weights > 0)):
            raise ValidationError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        for name in ("diameters", "moments"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.ascontiguousarray(arr, dtype=float).reshape(-1)
                if len(arr) != len(weights):
                    raise ValidationError(f"{name} do not match the node count")
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        object.__setattr__(self, "provenance", dict(self.provenance))

    def __len__(self):
        return len(self.weights)

    @property
    def kind(self) -> str:
        return self.provenance["kind"]

    @property
    def total_weight(self) -> float:
        return math.fsum(self.weights)

    def union(self, *others: "QuadratureRule") -> "QuadratureRule":
        """Concatenate rules over disjoint regions."""
        rules = (self,) + others

        def stack(name):
            if all(getattr(r, name) is not None for r in rules):
                return np.concatenate([getattr(r, name) for r in rules])
            return None

        return QuadratureRule(
            np.concatenate([r.nodes for r in rules]),
            np.concatenate([r.weights for r in rules]),
            {"kind": "union", "parts": [r.provenance for r in rules]},
            sum(r.region_area for r in rules),
            stack("diameters"), None, stack("moments"),
        )

    def save(self, path) -> None:
        extra = {name: getattr(self, name) for name in ("diameters", "moments")
                 if getattr(self, name) is not None}
        save_npz(path, nodes=self.nodes, weights=self.weights,
                 provenance=np.array(json.dumps(self.provenance, sort_keys=True)),
                 region_area=self.region_area,
                 bounding_area=np.nan if self.bounding_area is None else self.bounding_area,
                 **extra)

    @classmethod
    def load(cls, path) -> "QuadratureRule":
        with np.load(path) as data:
            opt = {name: data[name] if name in data.files else None
                   for name in ("diameters", "moments")}
            ba = float(data["bounding_area"])
            return cls(data["nodes"], data["weights"], json.loads(str(data["provenance"])),
                       float(data["region_area"]), opt["diameters"],
                       None if math.isnan(ba) else ba, opt["moments"])


def rule_from_triangulation(t: Triangulation) -> QuadratureRule:
    """One node per triangle at its centroid, weighted by the triangle area."""
    areas = t.areas
    edges2 = (t.edge_lengths() ** 2).sum(axis=1)
    return QuadratureRule(
        t.centroids, areas,
        {"kind": "triangulation_centroid", "min_angle": float(t.min_angle),
         "max_area": float(t.max_area), "triangles": len(t)},
        float(math.fsum(areas)), t.diameters, None,
        # polar moment of a triangle about its centroid, per unit area
        edges2 / 36.0,
    )


def rule_monte_carlo(region: PolygonalDomain, N: int, seed: int,
                     batch: int | None = None) -> QuadratureRule:
    """Rejection-sample ``N`` uniform nodes in ``region``.

    Points are drawn in the bounding rectangle until ``N`` land inside; with
    ``M`` total trials every node gets weight ``|R| / M``.
    """
    N = int(N)
    if N < 1:
        raise ValidationError("N must be at least 1")
    box = bounding_rectangle(region)
    rng = make_rng(seed)
    lo = np.array([box.xmin, box.ymin])
    span = np.array([box.xmax - box.xmin, box.ymax - box.ymin])
    kept = []
    have = 0
    trials = 0
    while have < N:
        size = batch or max(1024, 2 * (N - have))
        pts = lo + span * rng.random((size, 2))
        inside = contains(region, pts)
        idx = np.flatnonzero(inside)
        need = N - have
        if len(idx) >= need:
            # trials stop at the N-th acceptance
            trials += int(idx[need - 1]) + 1
            kept.append(pts[idx[:need]])
            have = N
            break
        trials += size
        kept.append(pts[idx])
        have += len(idx)
        if trials >= STALL_TRIALS and have / trials < STALL_RATIO:
            raise RejectionStall(
                f"acceptance ratio {have / trials:.2e} after {trials} trials")
    nodes = np.concatenate(kept)
    w = box.area / trials
    return QuadratureRule(
        nodes, np.full(N, w),
        {"kind": "monte_carlo", "seed": int(seed), "M_trials": int(trials),
         "rng": RNG_ALGORITHM},
        float(N * w), None, float(box.area),
    )


def _evaluate(integrand, nodes):
    vals = np.asarray(integrand(nodes), dtype=float)
    if vals.shape[:1] != (len(nodes),):
        # scalar callable; fall back to a per-node loop
        vals = np.array([float(integrand(p)) for p in nodes])
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals.reshape(len(nodes), -1)).any(axis=1))[0])
        raise NonFiniteIntegrand(f"integrand not finite at node {nodes[bad].tolist()}")
    return vals


def integrate(rule: QuadratureRule, integrand: Callable | np.ndarray) -> float | np.ndarray:
    """Weighted sum ``sum_j w_j phi(y_j)``.

    ``integrand`` is a callable taking an ``(N, 2)`` node array (or a single
    point), or an array of values already sampled at the nodes.
    """
    if callable(integrand):
        vals = _evaluate(integrand, rule.nodes)
    else:
        vals = np.asarray(integrand, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteIntegrand("integrand values are not all finite")
    out = np.tensordot(rule.weights, vals, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out


def triangulation_error_bound(t: Triangulation | QuadratureRule, k: ScaledKernel) -> float:
    """A-priori bound ``delta_eps * sum_j area(T_j) diam(T_j)``.

    ``delta_eps`` is the supremum of the radial kernel derivative.  Accepts the
    triangulation or a centroid rule built from it.
    """
    if k.shape.kind is not ShapeKind.GAUSSIAN:
        raise UnsupportedShape("error bound requires a differentiable kernel")
    delta = radial_derivative_sup(k)
    if isinstance(t, QuadratureRule):
        if t.diameters is None:
            raise ValidationError("rule carries no triangle diameters")
        areas, diams = t.weights, t.diameters
    else:
        areas, diams = t.areas, t.diameters
    return delta * math.fsum(areas * diams)


def monte_carlo_error_estimate(rule: QuadratureRule, integrand: Callable | np.ndarray) -> float:
    """Classical estimate ``s * |R| / |Y| * N**-0.5``.

    ``s`` is the sample standard deviation of the integrand over the accepted
    nodes and ``|Y|`` the estimated region area (sum of weights).
    """
    N = len(rule)
    if N < 2:
        raise InsufficientSamples("need at least two samples")
    if rule.bounding_area is None:
        raise ValidationError("error estimate needs a Monte Carlo rule")
    vals = _evaluate(integrand, rule.nodes) if callable(integrand) else np.asarray(integrand)
    s = float(np.std(vals, ddof=1))
    return s * rule.bounding_area / rule.total_weight / math.sqrt(N)


def rule_for_region(region: PolygonalDomain, max_area: float, min_angle: float | None = None,
                    method: str = "ruppert") -> QuadratureRule:
    """Triangulate ``region`` and return its centroid rule."""
    from .geometry import triangulate

    return rule_from_triangulation(triangulate(region, max_area, min_angle, method=method))
