"""Thickness diagnostics: ball densities, Lebesgue density, doubling ratios.

One-dimensional sets are finite unions of open intervals and are measured
exactly (use :class:`fractions.Fraction` endpoints for exact arithmetic).
Planar polygonal domains are measured by seeded Monte Carlo over the disc.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import EmptyBall, ValidationError
from .geometry import PolygonalDomain, contains
from .quadrature import make_rng, rule_monte_carlo

logger = logging.getLogger(__name__)

DEFAULT_DISC_SAMPLES = 100_000
DEFAULT_SEED = 0
#: last three values spreading more than this flag a non-convergent density
OSCILLATION_TOL = 0.05
#: infima strictly decreasing over the last three epsilons and losing more
#: than this fraction indicate a non-thick set
DROP_TOL = 0.10


@dataclass(frozen=True)
class IntervalUnionSet:
    """Finite union of pairwise disjoint, nonempty open intervals."""

    intervals: tuple

    def __post_init__(self):
        ivs = sorted((a, b) for a, b in self.intervals)
        for a, b in ivs:
            if not a < b:
                raise ValidationError(f"interval ({a}, {b}) is empty")
        for (a0, b0), (a1, b1) in zip(ivs, ivs[1:]):
            if a1 < b0:
                raise ValidationError(f"intervals ({a0}, {b0}) and ({a1}, {b1}) overlap")
        object.__setattr__(self, "intervals", tuple(ivs))
        object.__setattr__(self, "_starts", [a for a, _ in ivs])

    @classmethod
    def union_of(cls, intervals) -> "IntervalUnionSet":
        """Build from possibly overlapping intervals, merging overlaps."""
        merged = []
        for a, b in sorted(intervals):
            if merged and a < merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        return cls(tuple(merged))

    def union(self, other: "IntervalUnionSet") -> "IntervalUnionSet":
        return IntervalUnionSet.union_of(self.intervals + other.intervals)

    def __contains__(self, x) -> bool:
        i = bisect.bisect_right(self._starts, x) - 1
        return i >= 0 and self.intervals[i][0] < x < self.intervals[i][1]

    def measure(self):
        return sum((b - a for a, b in self.intervals), 0)

    def measure_within(self, lo, hi):
        """Length of the set inside ``(lo, hi)``; exact for Fraction input."""
        total = 0
        i = max(bisect.bisect_right(self._starts, lo) - 1, 0)
        for a, b in self.intervals[i:]:
            if a >= hi:
                break
            seg = min(b, hi) - max(a, lo)
            if seg > 0:
                total += seg
        return total

    @property
    def endpoints(self):
        return [p for iv in self.intervals for p in iv]


# ---------------------------------------------------------------- fixtures
def non_thick_example(n_max: int, r=None) -> IntervalUnionSet:
    """Intervals ``(a_n, b_n)`` centred in ``(1/(n+1), 1/n)`` covering a fraction ``r_n``.

    ``r`` maps ``n`` to the covered fraction and defaults to ``1/n``; endpoints
    are exact fractions.
    """
    r = r or (lambda n: Fraction(1, n))
    ivs = []
    for n in range(1, n_max + 1):
        centre = (Fraction(1, n) + Fraction(1, n + 1)) / 2
        half = Fraction(r(n)) * (Fraction(1, n) - Fraction(1, n + 1)) / 2
        ivs.append((centre - half, centre + half))
    return IntervalUnionSet(tuple(ivs))


def non_thick_probe(n: int):
    """Centre ``x_n`` and radius ``eps_n = 1/(2n(n+1))`` at which the density is ``r_n``."""
    return Fraction(1, 2 * n) + Fraction(1, 2 * n + 2), Fraction(1, 2 * n * (n + 1))


def punctured_ball(x, r, alpha, beta):
    """``A(x; r, alpha, beta) = B_r(x) minus (B_{(1-alpha) r}(x) minus B_{beta r}(x))`` in 1-D.

    Returned as three open intervals; boundary points are measure zero.
    """
    if not (0 <= alpha < Fraction(1, 2) and 0 <= beta < Fraction(1, 2)):
        raise ValidationError("alpha and beta must lie in [0, 1/2)")
    pieces = [(x - r, x - r + alpha * r), (x - beta * r, x + beta * r),
              (x + r - alpha * r, x + r)]
    return [(a, b) for a, b in pieces if a < b]


def doubling_counterexample(j_max: int):
    """Disjoint union of ``A(x_j; j, 1/3, 1/(3j))`` for ``j = 1..j_max``.

    Balls are separated by unit gaps.  Returns the set and the centres ``x_j``.
    """
    ivs = []
    centres = []
    edge = Fraction(0)
    for j in range(1, j_max + 1):
        r = Fraction(j)
        x = edge + r
        centres.append(x)
        ivs.extend(punctured_ball(x, r, Fraction(1, 3), Fraction(1, 3 * j)))
        edge = x + r + 1
    return IntervalUnionSet(tuple(ivs)), centres


# ------------------------------------------------------------------ densities
@lru_cache(maxsize=8)
def _disc_samples(n: int, seed: int) -> np.ndarray:
    rng = make_rng(seed)
    u = rng.random(n)
    theta = 2 * np.pi * rng.random(n)
    r = np.sqrt(u)
    out = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    out.setflags(write=False)
    return out


def boundary_distance(domain: PolygonalDomain, x) -> float:
    """Euclidean distance from ``x`` to the domain boundary."""
    x = np.asarray(x, dtype=float)
    best = math.inf
    for ring in domain.rings:
        a, b = ring.edges()
        ab = b - a
        t = np.clip(np.einsum("ij,ij->i", x - a, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
        best = min(best, float(np.min(np.hypot(*(a + t[:, None] * ab - x).T))))
    return best


def _ball_measure(s, x, eps, samples, seed):
    """``|B_eps(x) intersect s|``."""
    if isinstance(s, IntervalUnionSet):
        return s.measure_within(x - eps, x + eps)
    if isinstance(s, PolygonalDomain):
        x = np.asarray(x, dtype=float)
        if boundary_distance(s, x) > eps and contains(s, x):
            return math.pi * float(eps) ** 2
        pts = x + float(eps) * _disc_samples(samples, seed)
        frac = np.count_nonzero(contains(s, pts)) / samples
        return frac * math.pi * float(eps) ** 2
    raise ValidationError(f"unsupported set type {type(s).__name__}")


def tophat_density(s, x, eps, *, samples: int = DEFAULT_DISC_SAMPLES,
                   seed: int = DEFAULT_SEED):
    """``|B_eps(x) intersect s| / |B_eps(x)|``.

    Exact for interval unions (a Fraction when the inputs are Fractions);
    Monte Carlo with ``samples`` seeded disc points for planar domains.
    """
    if not eps > 0:
        raise ValidationError("eps must be positive")
    if isinstance(s, IntervalUnionSet):
        return s.measure_within(x - eps, x + eps) / (2 * eps)
    return _ball_measure(s, x, eps, samples, seed) / (math.pi * float(eps) ** 2)


@dataclass
class LebesgueDensity:
    epsilons: list
    values: list
    last: float
    extrapolated: float
    non_convergent: bool


def lebesgue_density(s, x, eps_seq: Sequence, **kw) -> LebesgueDensity:
    """Ball densities along a strictly decreasing ``eps`` sequence.

    ``extrapolated`` assumes an error linear in ``eps`` (one Richardson step on
    the last two values, clipped to [0, 1]).  ``non_convergent`` is set when
    the last three values spread by more than ``OSCILLATION_TOL``.
    """
    eps_seq = list(eps_seq)
    if not eps_seq or any(b >= a for a, b in zip(eps_seq, eps_seq[1:])):
        raise ValidationError("eps sequence must be nonempty and strictly decreasing")
    vals = [float(tophat_density(s, x, e, **kw)) for e in eps_seq]
    last = vals[-1]
    extrap = last
    if len(vals) >= 2:
        e0, e1 = float(eps_seq[-2]), float(eps_seq[-1])
        extrap = min(1.0, max(0.0, last + (last - vals[-2]) * e1 / (e0 - e1)))
    tail = vals[-3:]
    flag = len(tail) == 3 and (max(tail) - min(tail)) > OSCILLATION_TOL
    return LebesgueDensity(eps_seq, vals, last, extrap, flag)


def doubling_ratio(s, x, r, **kw):
    """``mu(B_2r(x) intersect s) / mu(B_r(x) intersect s)``."""
    if not r > 0:
        raise ValidationError("r must be positive")
    samples = kw.get("samples", DEFAULT_DISC_SAMPLES)
    seed = kw.get("seed", DEFAULT_SEED)
    inner = _ball_measure(s, x, r, samples, seed)
    if inner == 0:
        raise EmptyBall(f"ball of radius {r} at {x} misses the set")
    return _ball_measure(s, x, 2 * r, samples, seed) / inner


# --------------------------------------------------------------------- scan
@dataclass
class ThicknessReport:
    epsilons: list
    infima: list
    worst_probes: list
    verdict: str
    constant: float | None
    probes: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def thick(self) -> bool:
        return self.constant is not None

    def to_json(self) -> dict:
        return {"epsilons": [float(e) for e in self.epsilons],
                "infima": [float(v) for v in self.infima],
                "worst_probes": [np.asarray(p, dtype=float).tolist() for p in self.worst_probes],
                "verdict": self.verdict, "constant": self.constant,
                "thick": self.thick, "probes": self.probes, **self.extra}


def default_probes(s, count: int = 20, seed: int = DEFAULT_SEED, offset: float | None = None):
    """Boundary vertices, edge midpoints, random interior and near-boundary points."""
    rng = make_rng(seed + 1)
    if isinstance(s, IntervalUnionSet):
        pts = list(s.endpoints) + [(a + b) / 2 for a, b in s.intervals]
        for _ in range(count):
            a, b = s.intervals[int(rng.integers(len(s.intervals)))]
            pts.append(a + (b - a) * float(rng.random()))
        return pts
    pts = []
    for ring in s.rings:
        xy = ring.xy
        nxt = np.roll(xy, -1, axis=0)
        pts.extend(xy)
        pts.extend((xy + nxt) / 2)
    if count:
        pts.extend(rule_monte_carlo(s, count, seed + 2).nodes)
        # points just inside the boundary, at random positions along edges
        rings = s.rings
        edges = [(r.xy[i], r.xy[(i + 1) % len(r.xy)]) for r in rings for i in range(len(r.xy))]
        lengths = np.array([np.hypot(*(b - a)) for a, b in edges])
        off = offset if offset is not None else 1e-3 * float(lengths.sum()) / len(lengths)
        picks = rng.choice(len(edges), size=count, p=lengths / lengths.sum())
        for k, t in zip(picks, rng.random(count)):
            a, b = edges[k]
            p = a + t * (b - a)
            tangent = (b - a) / np.hypot(*(b - a))
            for sign in (1.0, -1.0):
                q = p + sign * off * np.array([-tangent[1], tangent[0]])
                if contains(s, q):
                    pts.append(q)
                    break
    return pts


def thickness_scan(s, eps_list: Sequence, probes=None, *, count: int = 20,
                   seed: int = DEFAULT_SEED, samples: int = DEFAULT_DISC_SAMPLES) -> ThicknessReport:
    """Infimum of the ball density over probe points for each ``eps``.

    The verdict is "non-thick trend" when the last three infima are strictly
    decreasing and lose more than 10% overall; otherwise the set is reported
    thick with constant ``c`` equal to the smallest of the last three infima.
    """
    eps_list = list(eps_list)
    if not eps_list:
        raise ValidationError("need at least one epsilon")
    if probes is None:
        probes = default_probes(s, count, seed)
    infima = []
    worst = []
    for eps in eps_list:
        dens = [float(tophat_density(s, p, eps, samples=samples, seed=seed)) for p in probes]
        k = int(np.argmin(dens))
        infima.append(dens[k])
        worst.append(probes[k])
        logger.debug("eps=%g inf density %.4f at %s", float(eps), dens[k], probes[k])
    tail = infima[-3:]
    dropping = (len(tail) == 3 and tail[0] > tail[1] > tail[2]
                and tail[2] < (1 - DROP_TOL) * tail[0])
    if dropping or min(tail) <= 0.0:
        verdict, c = "non-thick trend", None
    else:
        c = float(min(tail))
        verdict = f"thick with c ~ {c:.4f}"
    return ThicknessReport(eps_list, infima, worst, verdict, c, len(probes))
