"""Markov and bistochastic kernel smoothing of piecewise fields.

All operators work on quadrature-discretized data.  The domain rule
discretizes the degree function ``d = K 1_Omega``; each field piece carries its
own rule with the field pre-sampled at its nodes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import (DegreeBelowFloor, GridMismatch, InvariantViolation,
                     NonFiniteIntegrand, QuadratureDominates, ValidationError)
from .geometry import Polygon, PolygonalDomain, bounding_rectangle, contains
from .kernels import (ScaledKernel, ShapeKind, kernel_sum, local_derivative_sup,
                      local_hessian_sup, pair_reduce)
from .quadrature import QuadratureRule

logger = logging.getLogger(__name__)

DEFAULT_DEGREE_FLOOR = 0.05

MARKOV = "markov"
BISTOCHASTIC = "bistochastic"
OPERATORS = (MARKOV, BISTOCHASTIC)


def _as_points(x):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    return np.atleast_2d(pts).reshape(-1, 2), single


def _check_floor(deg, pts, floor, what="degree"):
    low = deg < floor
    if np.any(low):
        locs = pts[low]
        raise DegreeBelowFloor(
            f"{what} below floor {floor} at {int(low.sum())} point(s), "
            f"min {float(deg.min()):.3g} at {locs[np.argmin(deg[low])].tolist()}",
            count=int(low.sum()), locations=locs, min_degree=float(deg.min()))


@dataclass(frozen=True, eq=False)
class SmoothingContext:
    """Domain, its quadrature rule, the kernel and the degree guard.

    Degree and ``q`` values at the domain nodes are computed on first use and
    cached.
    """

    domain: PolygonalDomain
    domain_rule: QuadratureRule
    kernel: ScaledKernel
    degree_floor: float = DEFAULT_DEGREE_FLOOR
    threads: int = 1
    check_nodes: bool = True

    def __post_init__(self):
        if not 0.0 < self.degree_floor < 1.0:
            raise ValidationError("degree_floor must lie in (0, 1)")
        if self.kernel.n != 2:
            raise ValidationError("smoothing needs a planar kernel")
        if self.check_nodes and not np.all(contains(self.domain, self.domain_rule.nodes)):
            raise ValidationError("domain rule has nodes outside the domain")

    @property
    def epsilon(self) -> float:
        return self.kernel.epsilon

    def raw_degree(self, pts) -> np.ndarray:
        """Degree without the floor check."""
        return kernel_sum(self.kernel, pts, self.domain_rule.nodes,
                          self.domain_rule.weights, self.threads)

    @cached_property
    def node_degree(self) -> np.ndarray:
        d = self.raw_degree(self.domain_rule.nodes)
        d.setflags(write=False)
        return d

    @cached_property
    def node_q(self) -> np.ndarray:
        _check_floor(self.node_degree, self.domain_rule.nodes, self.degree_floor)
        q = kernel_sum(self.kernel, self.domain_rule.nodes, self.domain_rule.nodes,
                       self.domain_rule.weights / self.node_degree, self.threads)
        q.setflags(write=False)
        return q


@dataclass(frozen=True, eq=False)
class FieldPiece:
    """One polygon of a piecewise field with values sampled at its rule's nodes."""

    polygon: Polygon | PolygonalDomain
    rule: QuadratureRule
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 0:
            vals = np.full((len(self.rule), 1), float(vals))
        elif vals.ndim == 1:
            if len(self.rule) == 1 and len(vals) != 1:
                vals = vals.reshape(1, -1)
            elif len(vals) == len(self.rule):
                vals = vals.reshape(-1, 1)
            else:
                # a constant vector value broadcast to every node
                vals = np.tile(vals, (len(self.rule), 1))
        if vals.shape[0] != len(self.rule):
            raise ValidationError("piece values do not match the rule's node count")
        if not np.all(np.isfinite(vals)):
            raise NonFiniteIntegrand("piece values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class PiecewiseField:
    """``f = sum_l f_l`` over (possibly overlapping) pieces."""

    pieces: tuple
    d: int = 1

    def __post_init__(self):
        pieces = tuple(self.pieces)
        object.__setattr__(self, "pieces", pieces)
        for p in pieces:
            if p.d != self.d:
                raise ValidationError(f"piece has {p.d} components, field has {self.d}")

    @classmethod
    def from_function(cls, regions: Sequence, rules: Sequence[QuadratureRule],
                      fn: Callable) -> "PiecewiseField":
        """Sample ``fn`` (vectorized over ``(N, 2)`` nodes) on each piece."""
        pieces = []
        d = None
        for reg, rule in zip(regions, rules):
            vals = np.asarray(fn(rule.nodes), dtype=float).reshape(len(rule), -1)
            d = vals.shape[1]
            pieces.append(FieldPiece(reg, rule, vals))
        return cls(tuple(pieces), d or 1)

    @classmethod
    def constant(cls, region, rule: QuadratureRule, value=1.0) -> "PiecewiseField":
        val = np.atleast_1d(np.asarray(value, dtype=float))
        return cls((FieldPiece(region, rule, np.tile(val, (len(rule), 1))),), len(val))

    @cached_property
    def nodes(self) -> np.ndarray:
        if not self.pieces:
            return np.empty((0, 2))
        return np.concatenate([p.rule.nodes for p in self.pieces])

    @cached_property
    def weights(self) -> np.ndarray:
        if not self.pieces:
            return np.empty(0)
        return np.concatenate([p.rule.weights for p in self.pieces])

    @cached_property
    def values(self) -> np.ndarray:
        if not self.pieces:
            return np.empty((0, self.d))
        return np.concatenate([p.values for p in self.pieces])

    @cached_property
    def diameters(self) -> np.ndarray | None:
        if any(p.rule.diameters is None for p in self.pieces):
            return None
        if not self.pieces:
            return np.empty(0)
        return np.concatenate([p.rule.diameters for p in self.pieces])

    def integral(self) -> np.ndarray:
        """``int f`` by the piece rules (componentwise)."""
        return self.weights @ self.values

    def __add__(self, other: "PiecewiseField") -> "PiecewiseField":
        if other.d != self.d:
            raise ValidationError("cannot add fields with different component counts")
        return PiecewiseField(self.pieces + other.pieces, self.d)


@dataclass(frozen=True, eq=False)
class EvaluationGrid:
    """Cell-centred uniform grid with an inside-domain mask.

    Points are ordered row-major with ``y`` varying slowest, so values reshape
    to ``(ny, nx, d)``.
    """

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValidationError("grid resolution must be at least 2")
        mask = np.asarray(self.mask, dtype=bool).reshape(self.ny, self.nx)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def covering(cls, domain: PolygonalDomain, nx: int, ny: int | None = None,
                 square: bool = True) -> "EvaluationGrid":
        """Grid over the domain's bounding square (or rectangle)."""
        box = bounding_rectangle(domain)
        xmin, xmax, ymin, ymax = box
        if square:
            side = max(xmax - xmin, ymax - ymin)
            cx, cy = (xmin + xmax) / 2, (ymin + ymax) / 2
            xmin, xmax, ymin, ymax = cx - side / 2, cx + side / 2, cy - side / 2, cy + side / 2
        return cls.over(domain, xmin, xmax, ymin, ymax, nx, ny or nx)

    @classmethod
    def over(cls, domain, xmin, xmax, ymin, ymax, nx, ny) -> "EvaluationGrid":
        g = cls(xmin, xmax, ymin, ymax, nx, ny, np.ones((ny, nx), dtype=bool))
        return cls(xmin, xmax, ymin, ymax, nx, ny,
                   contains(domain, g.points).reshape(ny, nx))

    @property
    def dx(self) -> float:
        return (self.xmax - self.xmin) / self.nx

    @property
    def dy(self) -> float:
        return (self.ymax - self.ymin) / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def xs(self) -> np.ndarray:
        return self.xmin + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def ys(self) -> np.ndarray:
        return self.ymin + (np.arange(self.ny) + 0.5) * self.dy

    @property
    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def inside_points(self) -> np.ndarray:
        return self.points[self.mask.ravel()]


@dataclass(frozen=True, eq=False)
class GridResult:
    """Values on a grid; points outside the domain hold NaN."""

    grid: EvaluationGrid
    values: np.ndarray
    degree: np.ndarray
    operator: str = MARKOV

    @property
    def min_degree(self) -> float:
        d = self.degree[self.grid.mask]
        return float(d.min()) if d.size else float("nan")

    @property
    def d(self) -> int:
        return self.values.shape[-1]


# ------------------------------------------------------------------ operators
def degree(ctx: SmoothingContext, x) -> float | np.ndarray:
    """Discrete degree ``d(x) = sum_j w_j k(x, y_j)`` over the domain rule."""
    pts, single = _as_points(x)
    d = ctx.raw_degree(pts)
    _check_floor(d, pts, ctx.degree_floor)
    return float(d[0]) if single else d


def _markov(ctx, fld, pts):
    d = ctx.raw_degree(pts)
    _check_floor(d, pts, ctx.degree_floor)
    num = kernel_sum(ctx.kernel, pts, fld.nodes, fld.weights[:, None] * fld.values,
                     ctx.threads)
    return num / d[:, None], d


def markov_smooth(ctx: SmoothingContext, fld: PiecewiseField, x) -> np.ndarray:
    """``P f(x)``: kernel-weighted piece sums divided by the degree at ``x``."""
    pts, single = _as_points(x)
    out, _ = _markov(ctx, fld, pts)
    return out[0] if single else out


def q_function(ctx: SmoothingContext, x) -> float | np.ndarray:
    """``q(x) = sum_j w_j k(x, y_j) / d(y_j)`` over the domain rule."""
    pts, single = _as_points(x)
    _check_floor(ctx.node_degree, ctx.domain_rule.nodes, ctx.degree_floor)
    q = kernel_sum(ctx.kernel, pts, ctx.domain_rule.nodes,
                   ctx.domain_rule.weights / ctx.node_degree, ctx.threads)
    return float(q[0]) if single else q


def bistochastic_intermediate(ctx: SmoothingContext, fld: PiecewiseField) -> np.ndarray:
    """``(1/q) K (f/d)`` sampled at the domain nodes.

    The bistochastic kernel ``p~(x, y) = int k(x,z) k(z,y) / (d(x) q(z) d(y)) dz``
    factors as ``P o M_{1/q} o K o M_{1/d}``; this returns everything right of
    the outer ``P``.  The inner operator is the unnormalized ``K``: with a
    second ``P`` constants would no longer be preserved.
    """
    d_y = ctx.raw_degree(fld.nodes)
    _check_floor(d_y, fld.nodes, ctx.degree_floor)
    g = kernel_sum(ctx.kernel, ctx.domain_rule.nodes, fld.nodes,
                   (fld.weights / d_y)[:, None] * fld.values, ctx.threads)
    return g / ctx.node_q[:, None]


def _outer_markov(ctx, g, pts):
    d = ctx.raw_degree(pts)
    _check_floor(d, pts, ctx.degree_floor)
    num = kernel_sum(ctx.kernel, pts, ctx.domain_rule.nodes,
                     ctx.domain_rule.weights[:, None] * g, ctx.threads)
    return num / d[:, None], d


def bistochastic_smooth(ctx: SmoothingContext, fld: PiecewiseField, x) -> np.ndarray:
    """``P~ f(x)`` through the multiplication-operator factorization."""
    pts, single = _as_points(x)
    out, _ = _outer_markov(ctx, bistochastic_intermediate(ctx, fld), pts)
    return out[0] if single else out


def bistochastic_mass(ctx: SmoothingContext, fld: PiecewiseField) -> tuple[np.ndarray, np.ndarray]:
    """``(int P~f, int f)`` with the outer integral taken by the domain rule."""
    g = bistochastic_intermediate(ctx, fld)
    smoothed, _ = _outer_markov(ctx, g, ctx.domain_rule.nodes)
    return ctx.domain_rule.weights @ smoothed, fld.integral()


def bistochastic_mass_residual(ctx: SmoothingContext, fld: PiecewiseField) -> float:
    """Largest relative componentwise change in total mass under ``P~``."""
    after, before = bistochastic_mass(ctx, fld)
    scale = np.maximum(np.abs(before), np.finfo(float).tiny)
    return float(np.max(np.abs(after - before) / scale)) if len(before) else 0.0


def evaluate_grid(ctx: SmoothingContext, fld: PiecewiseField, grid: EvaluationGrid,
                  operator: str = MARKOV, raise_below_floor: bool = True) -> GridResult:
    """Apply an operator at every masked-in grid point.

    Points below the degree floor are collected into a single
    ``DegreeBelowFloor`` (count plus locations) rather than failing on the
    first one.
    """
    if operator not in OPERATORS:
        raise ValidationError(f"unknown operator {operator!r}")
    inside = grid.mask.ravel()
    pts = grid.points[inside]
    d = ctx.raw_degree(pts)
    low = d < ctx.degree_floor
    if raise_below_floor and np.any(low):
        raise DegreeBelowFloor(
            f"degree below floor {ctx.degree_floor} at {int(low.sum())} grid point(s); "
            f"min degree {float(d.min()):.4g}",
            count=int(low.sum()), locations=pts[low], min_degree=float(d.min()))
    if operator == MARKOV:
        src_nodes = fld.nodes
        src_vals = fld.weights[:, None] * fld.values
    else:
        src_nodes = ctx.domain_rule.nodes
        src_vals = ctx.domain_rule.weights[:, None] * bistochastic_intermediate(ctx, fld)
    num = kernel_sum(ctx.kernel, pts, src_nodes, src_vals, ctx.threads)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = num / d[:, None]
    out = np.full((grid.ny * grid.nx, fld.d), np.nan)
    out[inside] = vals
    deg = np.full(grid.ny * grid.nx, np.nan)
    deg[inside] = d
    return GridResult(grid, out.reshape(grid.ny, grid.nx, fld.d),
                      deg.reshape(grid.ny, grid.nx), operator)


# ------------------------------------------------------------------- norms
def _grid_arrays(a):
    if isinstance(a, GridResult):
        return a.values
    return np.asarray(a, dtype=float)


def lp_norm(values, p, cell_area: float, mask=None) -> float:
    """Discrete ``L^p`` norm of a gridded (possibly vector) quantity.

    NaN marks cells outside the domain; infinite values count and give an
    infinite norm.
    """
    v = _grid_arrays(values)
    if v.ndim == 3:
        mag = np.sqrt(np.sum(v * v, axis=-1))
    else:
        mag = np.abs(v)
    if mask is None:
        mask = ~np.isnan(mag)
    m = mag[mask]
    if m.size == 0:
        return 0.0
    if p in (math.inf, "inf"):
        return float(m.max())
    p = float(p)
    return float((np.sum(m**p) * cell_area) ** (1.0 / p))


def lp_error(grid_a, grid_b, p, cell_area: float) -> float:
    """``L^p`` norm of ``a - b`` over masked-in cells (Riemann weighting)."""
    a = _grid_arrays(grid_a)
    b = _grid_arrays(grid_b)
    if a.shape != b.shape:
        raise GridMismatch(f"grid shapes differ: {a.shape} vs {b.shape}")
    fa = ~np.isnan(a)
    fb = ~np.isnan(b)
    if not np.array_equal(fa, fb):
        raise GridMismatch("grid masks differ")
    mask = fa if a.ndim == 2 else fa.all(axis=-1)
    return lp_norm(np.where(fa, a - b, np.nan), p, cell_area, mask)


# ----------------------------------------------------------- quadrature check
def _node_index(domain_nodes, nodes):
    """Map each field node onto an identical domain node, or ``None``."""
    lookup = {row.tobytes(): i for i, row in enumerate(np.ascontiguousarray(domain_nodes))}
    idx = np.empty(len(nodes), dtype=np.int64)
    for j, row in enumerate(np.ascontiguousarray(nodes)):
        i = lookup.get(row.tobytes())
        if i is None:
            return None
        idx[j] = i
    return idx


def quadrature_error_field(ctx: SmoothingContext, fld: PiecewiseField, pts,
                           smoothed=None) -> np.ndarray:
    """A-priori bound on ``|P_N f(x) - P f(x)|`` at each point.

    The field is taken to be constant on the triangle behind each quadrature
    node.  On a triangle ``T`` with centroid ``c`` the centroid rule error for
    the kernel section is bounded by the smaller of

    * ``area * diam * sup|h'|`` (first order), and
    * ``area * m2 * sup|Hess h| / 2`` (second order; the linear Taylor term
      integrates to zero about the centroid, ``m2`` is the mean of
      ``|y - c|^2`` over ``T``),

    with both suprema taken over the radii ``T`` can reach from ``x``.
    Triangles cut by the truncation radius and the mass beyond it are
    accounted for separately, so the bound is against the untruncated kernel.

    When every field node is also a domain node the bound is centred: with
    ``c = P_N f(x)`` the discrete sum of ``k (f - c)`` vanishes, so only
    ``|f - c|`` enters and constant fields get a bound at round-off level.
    Otherwise numerator and degree errors are bounded separately.
    """
    k = ctx.kernel
    if k.shape.kind is not ShapeKind.GAUSSIAN:
        raise ValidationError("quadrature error bound requires the Gaussian kernel")
    rule = ctx.domain_rule
    if rule.diameters is None or fld.diameters is None:
        raise ValidationError("quadrature error bound requires triangulation rules")
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if smoothed is None:
        smoothed, _ = _markov(ctx, fld, pts)
    smoothed = np.asarray(smoothed, dtype=float).reshape(len(pts), -1)
    cutoff = k.truncation_radius
    radius = cutoff + float(max(rule.diameters.max(initial=0.0),
                                fld.diameters.max(initial=0.0)))
    tail = k.truncated_mass()

    def error_sum(nodes, diam, moments, weight, values=None, centre=None):
        # sum_j weight_j |values_j - centre| * (centroid-rule error bound of triangle j)
        def fn(t_idx, s_idx, r2):
            r = np.sqrt(r2)
            D = diam[s_idx][None, :]
            lo, hi = r - D, r + D
            err = D * local_derivative_sup(k, lo, hi)
            if moments is not None:
                err = np.minimum(err, 0.5 * moments[s_idx][None, :]
                                 * local_hessian_sup(k, lo, hi))
            # the truncated sum drops these triangles entirely
            cut = r * r > cutoff * cutoff
            err = np.where(cut, np.where(lo <= cutoff, _untruncated(k, lo), 0.0), err)
            err *= weight[s_idx][None, :]
            if values is not None:
                diff = values[s_idx][None, :, :] - centre[t_idx][:, None, :]
                err *= np.sqrt(np.sum(diff * diff, axis=-1))
            return err.sum(axis=1)[:, None]
        return pair_reduce(radius, pts, nodes, fn, 1, ctx.threads)[:, 0]

    d_n = ctx.raw_degree(pts)
    e_d = error_sum(rule.nodes, rule.diameters, rule.moments, rule.weights) + tail
    denom = d_n - e_d
    c_mag = np.sqrt(np.sum(smoothed**2, axis=1))
    f_max = float(np.sqrt(np.sum(fld.values**2, axis=1)).max(initial=0.0))
    idx = _node_index(rule.nodes, fld.nodes)
    if idx is not None:
        totals = np.zeros((len(rule), fld.d))
        np.add.at(totals, idx, fld.values)
        t_max = float(np.sqrt(np.sum(totals**2, axis=1)).max(initial=0.0))
        num = error_sum(rule.nodes, rule.diameters, rule.moments, rule.weights,
                        values=totals, centre=smoothed) + tail * (t_max + c_mag)
    else:
        mag = np.sqrt(np.sum(fld.values**2, axis=1))
        moments = None
        if all(p.rule.moments is not None for p in fld.pieces):
            moments = np.concatenate([p.rule.moments for p in fld.pieces])
        e_n = error_sum(fld.nodes, fld.diameters, moments, fld.weights * mag)
        num = e_n + tail * f_max * len(fld.pieces) + c_mag * e_d
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(denom > 0, num / denom, np.inf)
    return bound


def _untruncated(k, r):
    """Untruncated ``h_eps`` at radius ``r`` (clipped at zero)."""
    r = np.maximum(r, 0.0)
    return k.scale * k.shape.profile(r / k.epsilon)


# -------------------------------------------------------------- convergence
def _norm_order(p):
    if p in (math.inf, "inf"):
        return math.inf
    if p not in (1, 2):
        raise ValidationError(f"unsupported norm order {p!r}")
    return int(p)


@dataclass
class ConvergenceTable:
    epsilons: list
    l1: list
    l2: list
    linf: list
    bounds: list
    min_degrees: list
    slopes: dict
    p: object = 1

    def rows(self):
        return list(zip(self.epsilons, self.l1, self.l2, self.linf, self.bounds,
                        self.min_degrees))

    def errors(self, p=None):
        p = _norm_order(self.p if p is None else p)
        return {1: self.l1, 2: self.l2, math.inf: self.linf}[p]


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x`` over positive entries."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def convergence_study(contexts: Sequence[SmoothingContext], fld: PiecewiseField | Sequence,
                      exact: Callable, grid: EvaluationGrid, p=1, *,
                      operator: str = MARKOV, check_quadrature: bool = True,
                      monotone_tol: float = 0.10, roundoff: float = 1e-12) -> ConvergenceTable:
    """Errors of the smoothed field against ``exact`` over decreasing epsilons.

    Parameters
    ----------
    contexts
        One smoothing context per epsilon, strictly decreasing in epsilon.
    fld
        The field, or one field per context (needed when each context has
        its own domain rule and the field shares its nodes).
    exact
        Vectorized callable returning the exact field at ``(m, 2)`` points.
    p
        Norm used for the quadrature check and the monotonicity test.
    check_quadrature
        Raise ``QuadratureDominates`` if the a-priori quadrature bound exceeds
        half the measured error.  Bounds below ``roundoff`` times the field
        scale are treated as zero.

    Raises
    ------
    InvariantViolation
        If the error grows by more than ``monotone_tol`` between consecutive
        epsilons, or if the maximal bound ``||P f|| <= ||f|| / c`` fails.
    """
    eps = [c.epsilon for c in contexts]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError("epsilon list must be strictly decreasing")
    fields = list(fld) if isinstance(fld, (list, tuple)) else [fld] * len(contexts)
    if len(fields) != len(contexts):
        raise ValidationError("need one field per context")
    inside = grid.mask.ravel()
    pts = grid.points[inside]
    ex = np.asarray(exact(pts), dtype=float).reshape(len(pts), -1)
    ex_grid = np.full((grid.ny * grid.nx, ex.shape[1]), np.nan)
    ex_grid[inside] = ex
    ex_grid = ex_grid.reshape(grid.ny, grid.nx, -1)
    scale = max(float(np.abs(ex).max(initial=0.0)), 1.0)
    f_norm = lp_norm(ex_grid, p, grid.cell_area)

    table = ConvergenceTable([], [], [], [], [], [], {}, p)
    for ctx, f in zip(contexts, fields):
        res = evaluate_grid(ctx, f, grid, operator)
        errs = {q: lp_error(res, ex_grid, q, grid.cell_area) for q in (1, 2, math.inf)}
        bound = float("nan")
        measured = errs[_norm_order(p)]
        if check_quadrature:
            vals = res.values.reshape(-1, f.d)[inside]
            e_field = quadrature_error_field(ctx, f, pts, vals)
            e_grid = np.full((grid.ny * grid.nx, 1), np.nan)
            e_grid[inside, 0] = e_field
            bound = lp_norm(e_grid.reshape(grid.ny, grid.nx, 1), p, grid.cell_area,
                            grid.mask)
            if bound > roundoff * scale and bound > 0.5 * measured:
                raise QuadratureDominates(
                    f"quadrature bound {bound:.3g} exceeds half the measured error "
                    f"{measured:.3g} at epsilon {ctx.epsilon:g}; refine the mesh")
        min_deg = res.min_degree
        sm_norm = lp_norm(res, p, grid.cell_area)
        if sm_norm > f_norm / min_deg * (1 + 1e-9) + roundoff * scale:
            raise InvariantViolation(
                f"||P f|| = {sm_norm:.6g} exceeds ||f|| / c = {f_norm / min_deg:.6g}")
        table.epsilons.append(ctx.epsilon)
        table.l1.append(errs[1])
        table.l2.append(errs[2])
        table.linf.append(errs[math.inf])
        table.bounds.append(bound)
        table.min_degrees.append(min_deg)
        logger.info("epsilon=%g l1=%.4g l2=%.4g linf=%.4g bound=%.3g", ctx.epsilon,
                    errs[1], errs[2], errs[math.inf], bound)

    chosen = table.errors(p)
    for a, b in zip(chosen, chosen[1:]):
        if b > a * (1 + monotone_tol) + roundoff * scale:
            raise InvariantViolation(f"error is not decreasing: {a:.4g} -> {b:.4g}")
    table.slopes = {"l1": loglog_slope(eps, table.l1), "l2": loglog_slope(eps, table.l2),
                    "linf": loglog_slope(eps, table.linf)}
    return table
