"""Radial shape functions, their epsilon-scaled kernels, and fast kernel sums.

A shape function ``h`` is a radial profile on R^n.  The scaled kernel is
``h_eps(x) = eps**-n * h(x / eps)`` and the kernel section at ``x`` is
``k_eps(x, y) = h_eps(y - x)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import integrate as _integrate

from .errors import UnsupportedShape, ValidationError

#: Gaussian kernels are cut off at this many epsilons.  The mass outside is
#: exp(-32) ~ 1.3e-14 in two dimensions.
GAUSSIAN_CUTOFF = 8.0

# dense kernel blocks are split so no temporary exceeds this many entries
_BLOCK_ENTRIES = 4_000_000


class ShapeKind(str, Enum):
    GAUSSIAN = "gaussian"
    TOPHAT = "tophat"


def _unit_ball_volume(n):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class ShapeFunction:
    """Radial profile ``h`` on R^n together with its axiom flags.

    Flags: K1 nonnegative, K2 radial, K3 unit integral, K4 radially
    nonincreasing, K5 continuous, K6 strictly positive.
    """

    kind: ShapeKind
    n: int = 2
    axioms: dict = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        if self.n not in (1, 2):
            raise ValidationError("only dimensions 1 and 2 are supported")
        smooth = self.kind is ShapeKind.GAUSSIAN
        axioms = {"K1": True, "K2": True, "K3": True, "K4": True, "K5": smooth, "K6": smooth}
        object.__setattr__(self, "axioms", axioms)
        mass = self.radial_mass()
        if abs(mass - 1.0) > 1e-6:
            raise ValidationError(f"shape function integrates to {mass}, not 1")

    @classmethod
    def gaussian(cls, n: int = 2) -> "ShapeFunction":
        return cls(ShapeKind.GAUSSIAN, n)

    @classmethod
    def tophat(cls, n: int = 2) -> "ShapeFunction":
        return cls(ShapeKind.TOPHAT, n)

    @property
    def peak(self) -> float:
        """Value at the origin."""
        if self.kind is ShapeKind.GAUSSIAN:
            return (2 * math.pi) ** (-self.n / 2)
        return 1.0 / _unit_ball_volume(self.n)

    @property
    def support_radius(self) -> float:
        return math.inf if self.kind is ShapeKind.GAUSSIAN else 1.0

    def satisfies(self, *names) -> bool:
        return all(self.axioms[k] for k in names)

    def profile(self, r):
        """``h`` as a function of the radius."""
        r = np.asarray(r, dtype=float)
        if self.kind is ShapeKind.GAUSSIAN:
            return self.peak * np.exp(-0.5 * r * r)
        return np.where(r < 1.0, self.peak, 0.0)

    def profile_sq(self, r2):
        """``h`` as a function of the squared radius (avoids a sqrt)."""
        if self.kind is ShapeKind.GAUSSIAN:
            return self.peak * np.exp(-0.5 * r2)
        return np.where(r2 < 1.0, self.peak, 0.0)

    def radial_mass(self) -> float:
        """Integral of ``h`` over R^n by adaptive radial quadrature."""
        surface = 2.0 if self.n == 1 else 2 * math.pi
        upper = 1.0 if self.kind is ShapeKind.TOPHAT else np.inf
        f = lambda r: surface * r ** (self.n - 1) * float(self.profile(r))  # noqa: E731
        val, _ = _integrate.quad(f, 0.0, upper, epsabs=1e-13, epsrel=1e-12)
        return val


def shape_eval(s: ShapeFunction, x) -> float | np.ndarray:
    """Evaluate ``h`` at points ``x`` (last axis is the coordinate axis)."""
    x = np.asarray(x, dtype=float)
    if s.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        r = np.abs(x)
    else:
        r = np.linalg.norm(x, axis=-1)
    out = s.profile(r)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ScaledKernel:
    """``h_eps`` with a finite truncation radius used for spatial culling."""

    shape: ShapeFunction
    epsilon: float
    truncation_radius: float = field(init=False)

    def __post_init__(self):
        eps = float(self.epsilon)
        if not (eps > 0 and math.isfinite(eps)):
            raise ValidationError(f"epsilon must be positive and finite, got {self.epsilon}")
        object.__setattr__(self, "epsilon", eps)
        if self.shape.kind is ShapeKind.GAUSSIAN:
            radius = GAUSSIAN_CUTOFF * eps
        else:
            radius = eps
        object.__setattr__(self, "truncation_radius", radius)

    @classmethod
    def gaussian(cls, epsilon: float, n: int = 2) -> "ScaledKernel":
        return cls(ShapeFunction.gaussian(n), epsilon)

    @classmethod
    def tophat(cls, epsilon: float, n: int = 2) -> "ScaledKernel":
        return cls(ShapeFunction.tophat(n), epsilon)

    @property
    def n(self) -> int:
        return self.shape.n

    @property
    def scale(self) -> float:
        return self.epsilon ** (-self.n)

    def truncated_mass(self) -> float:
        """Mass of ``h_eps`` beyond the truncation radius."""
        if self.shape.kind is ShapeKind.TOPHAT:
            return 0.0
        c = GAUSSIAN_CUTOFF
        if self.n == 2:
            return math.exp(-0.5 * c * c)
        return math.erfc(c / math.sqrt(2.0))

    def profile_sq(self, r2):
        """``h_eps`` as a function of squared distance, zero beyond the cutoff."""
        eps2 = self.epsilon * self.epsilon
        val = self.scale * self.shape.profile_sq(r2 / eps2)
        if self.shape.kind is ShapeKind.GAUSSIAN:
            val = np.where(r2 <= self.truncation_radius**2, val, 0.0)
        return val

    def __call__(self, x, y):
        return kernel_eval(self, x, y)


def kernel_eval(k: ScaledKernel, x, y) -> float | np.ndarray:
    """``k_eps(x, y) = h_eps(y - x)``, truncated beyond the cutoff radius."""
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    if k.n == 1 and (d.ndim == 0 or d.shape[-1] != 1):
        r2 = d * d
    else:
        r2 = np.sum(d * d, axis=-1)
    out = k.profile_sq(r2)
    return float(out) if np.ndim(out) == 0 else out


def radial_derivative_sup(k: ScaledKernel) -> float:
    """Supremum of ``|d h_eps / d r|`` for the planar Gaussian.

    The maximum sits at ``r = eps`` and equals ``eps**-3 e**-0.5 / (2 pi)``.
    """
    if k.shape.kind is not ShapeKind.GAUSSIAN:
        raise UnsupportedShape("the tophat kernel has no bounded radial derivative")
    if k.n != 2:
        raise UnsupportedShape("derivative bound implemented for n = 2 only")
    return math.exp(-0.5) / (2 * math.pi) / k.epsilon**3


def radial_derivative(k: ScaledKernel, r):
    """``|h_eps'(r)|`` for the planar Gaussian."""
    if k.shape.kind is not ShapeKind.GAUSSIAN:
        raise UnsupportedShape("the tophat kernel has no bounded radial derivative")
    r = np.asarray(r, dtype=float)
    eps = k.epsilon
    return k.scale * k.shape.peak * (r / eps**2) * np.exp(-0.5 * (r / eps) ** 2)


def local_derivative_sup(k: ScaledKernel, rmin, rmax):
    """Supremum of ``|h_eps'|`` over radii in ``[rmin, rmax]`` (elementwise).

    The Gaussian derivative magnitude is unimodal with its peak at ``eps``.
    """
    rmin = np.maximum(np.asarray(rmin, dtype=float), 0.0)
    rmax = np.asarray(rmax, dtype=float)
    eps = k.epsilon
    r = np.where(rmax < eps, rmax, np.where(rmin > eps, rmin, eps))
    return radial_derivative(k, r)


def _hessian_profile(s):
    # spectral norm of the Gaussian Hessian in units of h(0) / eps**2
    return np.exp(-0.5 * s * s) * np.maximum(1.0, np.abs(s * s - 1.0))


def local_hessian_sup(k: ScaledKernel, rmin, rmax):
    """Supremum of the Hessian spectral norm of ``h_eps`` over radii in ``[rmin, rmax]``.

    The Hessian eigenvalues are ``h''(r)`` and ``h'(r) / r``.  In units of
    ``s = r / eps`` their largest magnitude is proportional to
    ``exp(-s^2/2) max(1, |s^2 - 1|)``, which decreases on ``[0, sqrt 2]``,
    increases up to ``sqrt 3`` and decreases afterwards.
    """
    if k.shape.kind is not ShapeKind.GAUSSIAN:
        raise UnsupportedShape("the tophat kernel has no bounded Hessian")
    eps = k.epsilon
    a = np.maximum(np.asarray(rmin, dtype=float), 0.0) / eps
    b = np.asarray(rmax, dtype=float) / eps
    val = np.maximum(_hessian_profile(a), _hessian_profile(b))
    s3 = math.sqrt(3.0)
    val = np.where((a <= s3) & (s3 <= b), np.maximum(val, _hessian_profile(s3)), val)
    return k.scale * k.shape.peak / eps**2 * val


# ---------------------------------------------------------------- kernel sums
class _Bins:
    """Sources sorted into square cells so neighbours can be sliced out."""

    def __init__(self, points, cell, origin, shape):
        self.cell = cell
        self.origin = origin
        self.nx, self.ny = shape
        ij = np.floor((points - origin) / cell).astype(np.int64)
        ij[:, 0] = np.clip(ij[:, 0], 0, self.nx - 1)
        ij[:, 1] = np.clip(ij[:, 1], 0, self.ny - 1)
        flat = ij[:, 1] * self.nx + ij[:, 0]
        self.order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.nx * self.ny)
        self.start = np.concatenate([[0], np.cumsum(counts)])
        self.flat = flat

    def gather(self, i, j, reach):
        """Sorted-source indices in the cells within ``reach`` of cell (i, j)."""
        i0, i1 = max(i - reach, 0), min(i + reach, self.nx - 1)
        parts = []
        for jj in range(max(j - reach, 0), min(j + reach, self.ny - 1) + 1):
            a = self.start[jj * self.nx + i0]
            b = self.start[jj * self.nx + i1 + 1]
            if b > a:
                parts.append(np.arange(a, b))
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(parts)


def _pairwise_sq(tx, sx):
    d0 = tx[:, 0:1] - sx[None, :, 0]
    d1 = tx[:, 1:2] - sx[None, :, 1]
    return d0 * d0 + d1 * d1


def neighbour_blocks(targets, sources, radius):
    """Yield ``(target_idx, source_idx)`` blocks covering all pairs within ``radius``.

    Targets are grouped into cells of side ``radius / 2`` and paired with the
    sources in the surrounding 5 x 5 cells.  The iteration order is fixed, so
    every reduction built on top of it is deterministic.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    sources = np.asarray(sources, dtype=float).reshape(-1, 2)
    if len(targets) == 0 or len(sources) == 0:
        return
    lo = np.minimum(targets.min(axis=0), sources.min(axis=0))
    hi = np.maximum(targets.max(axis=0), sources.max(axis=0))
    cell = radius / 2.0
    span = np.maximum(hi - lo, cell)
    shape = np.ceil(span / cell).astype(np.int64) + 1
    # cap the grid of cells for very spread-out inputs
    while shape[0] * shape[1] > 4_000_000:
        cell *= 2.0
        shape = np.ceil(span / cell).astype(np.int64) + 1
    reach = int(math.ceil(radius / cell))
    src = _Bins(sources, cell, lo, shape)
    tgt = _Bins(targets, cell, lo, shape)
    for flat in np.flatnonzero(np.diff(tgt.start)):
        t_idx = tgt.order[tgt.start[flat]:tgt.start[flat + 1]]
        s_sorted = src.gather(int(flat % shape[0]), int(flat // shape[0]), reach)
        if len(s_sorted) == 0:
            continue
        s_idx = src.order[s_sorted]
        step = max(1, _BLOCK_ENTRIES // len(s_idx))
        for a in range(0, len(t_idx), step):
            yield t_idx[a:a + step], s_idx


def kernel_sum(k: ScaledKernel, targets, sources, values, threads: int = 1):
    """``out[i] = sum_j k(x_i, y_j) * values[j]`` with spatial culling.

    Parameters
    ----------
    k
        Scaled kernel; pairs farther apart than its truncation radius are skipped.
    targets, sources
        ``(m, 2)`` and ``(n, 2)`` point arrays.
    values
        ``(n,)`` or ``(n, d)`` array, typically quadrature weight times field value.
    threads
        Worker threads.  Each target row is reduced inside a single block, so
        the result does not depend on the thread count.
    """
    if k.n != 2:
        raise ValidationError("kernel sums are implemented for planar kernels")
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    sources = np.asarray(sources, dtype=float).reshape(-1, 2)
    values = np.asarray(values, dtype=float)
    vec = values.ndim == 1
    vals = values.reshape(len(sources), values.shape[1] if values.ndim > 1 else 1)
    out = np.zeros((len(targets), vals.shape[1]))

    def work(block):
        t_idx, s_idx = block
        w = k.profile_sq(_pairwise_sq(targets[t_idx], sources[s_idx]))
        out[t_idx] = w @ vals[s_idx]

    blocks = neighbour_blocks(targets, sources, k.truncation_radius)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))
    else:
        for b in blocks:
            work(b)
    return out[:, 0] if vec else out


def pair_reduce(radius, targets, sources, fn, ncols, threads: int = 1):
    """General culled reduction over all pairs closer than ``radius``.

    ``fn`` receives target indices, source indices and the squared distances
    of a block and returns the ``(len(t_idx), ncols)`` sums over that block.
    Pairs beyond ``radius`` may be included; ``fn`` must zero them itself.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    sources = np.asarray(sources, dtype=float).reshape(-1, 2)
    out = np.zeros((len(targets), ncols))

    def work(block):
        t_idx, s_idx = block
        out[t_idx] = fn(t_idx, s_idx, _pairwise_sq(targets[t_idx], sources[s_idx]))

    blocks = neighbour_blocks(targets, sources, radius)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))
    else:
        for b in blocks:
            work(b)
    return out
