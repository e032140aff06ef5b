"""Constrained Delaunay triangulation with Ruppert-style quality refinement.

Pure-Python incremental mesher.  Vertices are inserted with a constrained
Bowyer-Watson step (cavities never grow across constrained edges), input
segments are recovered by midpoint splitting, the inside of the domain is
found by parity flood fill, and then bad triangles are removed by inserting
circumcenters.  Segments encroached upon by a vertex or by a rejected
circumcenter are split first; subsegments hanging off an input vertex are
split on concentric power-of-two shells so that small input angles do not
trigger endless mutual encroachment.

Robustness relies on floating-point predicates plus a star-shape repair of
every cavity; there are no exact-arithmetic predicates.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .errors import InvalidRegion, NonTerminatingRefinement

# Relative slack used by the quality tests so that triangles sitting exactly
# on a constraint (e.g. a 30 degree input corner with min_angle = 30 degrees)
# are not refined forever.
_QUALITY_RTOL = 1e-9


def _key(u, v):
    return (u, v) if u < v else (v, u)


class Mesher:
    """Incremental constrained Delaunay mesher.

    Triangles are vertex triples in counter-clockwise order; adjacency is
    recovered through ``self.edges``, which maps every directed edge to the
    triangle that owns it.
    """

    def __init__(self, max_area, min_angle, max_insertions=10**7):
        self.max_area = float(max_area)
        self.min_angle = float(min_angle)
        self.cos_min = math.cos(self.min_angle)
        self.max_insertions = int(max_insertions)
        self.x = []
        self.y = []
        self.is_input = []
        self.vtri = []
        self.tris = []
        self.inside = []
        self.edges = {}
        self.constrained = set()
        self.insertions = 0
        self.n_super = 3

    # ------------------------------------------------------------------ basics
    def _add_vertex(self, x, y, is_input):
        self.x.append(float(x))
        self.y.append(float(y))
        self.is_input.append(is_input)
        self.vtri.append(-1)
        return len(self.x) - 1

    def _new_tri(self, a, b, c, inside):
        t = len(self.tris)
        self.tris.append((a, b, c))
        self.inside.append(inside)
        edges = self.edges
        edges[(a, b)] = t
        edges[(b, c)] = t
        edges[(c, a)] = t
        vtri = self.vtri
        vtri[a] = t
        vtri[b] = t
        vtri[c] = t
        return t

    def _kill(self, t):
        a, b, c = self.tris[t]
        edges = self.edges
        for e in ((a, b), (b, c), (c, a)):
            if edges.get(e) == t:
                del edges[e]
        self.tris[t] = None

    def _orient(self, u, v, px, py):
        X, Y = self.x, self.y
        return (X[v] - X[u]) * (py - Y[u]) - (Y[v] - Y[u]) * (px - X[u])

    def _incircle(self, t, px, py):
        a, b, c = self.tris[t]
        X, Y = self.x, self.y
        adx = X[a] - px
        ady = Y[a] - py
        bdx = X[b] - px
        bdy = Y[b] - py
        cdx = X[c] - px
        cdy = Y[c] - py
        return ((adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
                + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
                + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady))

    def _circumcenter(self, t):
        a, b, c = self.tris[t]
        X, Y = self.x, self.y
        bx = X[b] - X[a]
        by = Y[b] - Y[a]
        cx = X[c] - X[a]
        cy = Y[c] - Y[a]
        d = 2.0 * (bx * cy - by * cx)
        b2 = bx * bx + by * by
        c2 = cx * cx + cy * cy
        return X[a] + (cy * b2 - by * c2) / d, Y[a] + (bx * c2 - cx * b2) / d

    # ---------------------------------------------------------------- location
    def _locate(self, t, px, py, stop_at_constraints):
        """Walk from triangle ``t`` towards ``(px, py)``.

        Returns ``(triangle, blocking_edge)``; the edge is ``None`` unless the
        walk had to cross a constrained edge and ``stop_at_constraints`` is set.
        """
        X, Y = self.x, self.y
        tris = self.tris
        edges = self.edges
        max_steps = 4 * int(math.sqrt(len(tris))) + 1000
        prev = -1
        for _ in range(max_steps):
            a, b, c = tris[t]
            best = None
            best_val = 0.0
            for u, v in ((a, b), (b, c), (c, a)):
                ex = X[v] - X[u]
                ey = Y[v] - Y[u]
                o = ex * (py - Y[u]) - ey * (px - X[u])
                if o < 0.0:
                    val = o / math.hypot(ex, ey)
                    if val < best_val:
                        best_val = val
                        best = (u, v)
            if best is None:
                return t, None
            u, v = best
            if stop_at_constraints and _key(u, v) in self.constrained:
                return t, best
            n = edges.get((v, u))
            if n is None:
                raise InvalidRegion("point lies outside the triangulated hull")
            if n == prev:
                # the point sits on the shared edge up to rounding
                return t, None
            prev, t = t, n
        return self._locate_brute(px, py), None

    def _locate_brute(self, px, py):
        """Triangle whose edges the point violates least (rounding tolerant)."""
        X, Y = self.x, self.y
        best, best_val = None, -math.inf
        for t, tri in enumerate(self.tris):
            if tri is None:
                continue
            worst = math.inf
            for u, v in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                length = math.hypot(X[v] - X[u], Y[v] - Y[u])
                worst = min(worst, self._orient(u, v, px, py) / length)
            if worst >= 0.0:
                return t
            if worst > best_val:
                best, best_val = t, worst
        scale = max(map(abs, X[:3] + Y[:3]))
        if best is None or best_val < -1e-9 * scale:
            raise InvalidRegion("point location failed")
        return best

    # --------------------------------------------------------------- insertion
    def _cavity(self, t0, px, py, split_key, banned, forced):
        tris = self.tris
        edges = self.edges
        constrained = self.constrained
        cav = {t0}
        stack = [t0]
        bnd = []
        while stack:
            t = stack.pop()
            a, b, c = tris[t]
            for u, v in ((a, b), (b, c), (c, a)):
                k = (u, v) if u < v else (v, u)
                if k in constrained and k != split_key:
                    bnd.append((u, v, t))
                    continue
                n = edges.get((v, u))
                if n is None:
                    bnd.append((u, v, t))
                    continue
                if n in cav:
                    continue
                if n not in banned and (n in forced or self._incircle(n, px, py) > 0.0):
                    cav.add(n)
                    stack.append(n)
                else:
                    bnd.append((u, v, t))
        return cav, bnd

    def _insert(self, px, py, t_hint, split_key=None, check_encroach=False,
                is_input=False):
        """Insert a vertex; returns ``("ok", (vertex, new_tris))`` or a refusal.

        Refusals are ``("blocked", [segment keys])`` when the point lies behind
        or inside the diametral circle of constrained segments.
        """
        t0, block = self._locate(t_hint, px, py, stop_at_constraints=check_encroach)
        if block is not None:
            return "blocked", [_key(*block)]
        banned = set()
        forced = set()
        for _ in range(64):
            cav, bnd = self._cavity(t0, px, py, split_key, banned, forced)
            if check_encroach:
                hits = []
                X, Y = self.x, self.y
                for u, v, _t in bnd:
                    k = _key(u, v)
                    if k in self.constrained:
                        dot = (X[u] - px) * (X[v] - px) + (Y[u] - py) * (Y[v] - py)
                        if dot < 0.0:
                            hits.append(k)
                if hits:
                    return "blocked", hits
            bad = None
            for u, v, t in bnd:
                if self._orient(u, v, px, py) <= 0.0:
                    bad = (u, v, t)
                    break
            if bad is None:
                break
            u, v, t = bad
            if t != t0:
                banned.add(t)
                continue
            k = _key(u, v)
            n = self.edges.get((v, u))
            if (k in self.constrained and k != split_key) or n is None:
                return "blocked", [k]
            forced.add(n)
            banned.discard(n)
        else:
            raise InvalidRegion("could not build a star-shaped cavity")

        for t in cav:
            self._kill(t)
        p = self._add_vertex(px, py, is_input)
        inside = self.inside
        new = [self._new_tri(u, v, p, inside[t]) for u, v, t in bnd]
        if split_key is not None:
            a, b = split_key
            self.constrained.discard(split_key)
            self.constrained.add(_key(a, p))
            self.constrained.add(_key(p, b))
        self.insertions += 1
        if self.insertions > self.max_insertions:
            raise NonTerminatingRefinement(
                f"refinement exceeded {self.max_insertions} insertions")
        return "ok", (p, new)

    # ------------------------------------------------------------ construction
    def build(self, rings):
        """Triangulate the polygon-with-holes given as a list of closed rings."""
        pts = np.concatenate([np.asarray(r, dtype=float) for r in rings])
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        cx, cy = (lo + hi) / 2.0
        size = float(max(hi - lo))
        if not size > 0:
            raise InvalidRegion("region has zero extent")
        s = 64.0 * size
        v0 = self._add_vertex(cx - 2 * s, cy - s, False)
        v1 = self._add_vertex(cx + 2 * s, cy - s, False)
        v2 = self._add_vertex(cx, cy + 2 * s, False)
        self._new_tri(v0, v1, v2, False)

        index = {}
        segments = []
        for ring in rings:
            ids = []
            for x, y in ring:
                xy = (float(x), float(y))
                if xy not in index:
                    t = self.vtri[len(self.x) - 1]
                    status, payload = self._insert(xy[0], xy[1], t, is_input=True)
                    if status != "ok":
                        raise InvalidRegion("failed to insert input vertex")
                    index[xy] = payload[0]
                ids.append(index[xy])
            for i in range(len(ids)):
                segments.append((ids[i], ids[(i + 1) % len(ids)]))

        self._recover_segments(segments)
        self._classify()

    def _recover_segments(self, segments):
        stack = list(reversed(segments))
        guard = 0
        while stack:
            a, b = stack.pop()
            if (a, b) in self.edges or (b, a) in self.edges:
                self.constrained.add(_key(a, b))
                continue
            guard += 1
            if guard > 10**6:
                raise NonTerminatingRefinement("segment recovery did not terminate")
            mx = 0.5 * (self.x[a] + self.x[b])
            my = 0.5 * (self.y[a] + self.y[b])
            status, payload = self._insert(mx, my, self.vtri[a])
            if status != "ok":
                raise InvalidRegion("segments intersect or touch")
            m = payload[0]
            stack.append((m, b))
            stack.append((a, m))

    def _classify(self):
        tris = self.tris
        depth = [-1] * len(tris)
        frontier = [t for t, tri in enumerate(tris)
                    if tri is not None and min(tri) < self.n_super]
        d = 0
        while frontier:
            nxt = []
            queue = deque()
            for t in frontier:
                if depth[t] < 0:
                    depth[t] = d
                    queue.append(t)
            while queue:
                t = queue.popleft()
                a, b, c = tris[t]
                for u, v in ((a, b), (b, c), (c, a)):
                    n = self.edges.get((v, u))
                    if n is None or depth[n] >= 0:
                        continue
                    if _key(u, v) in self.constrained:
                        nxt.append(n)
                    else:
                        depth[n] = d
                        queue.append(n)
            frontier = nxt
            d += 1
        for t, tri in enumerate(tris):
            if tri is not None:
                self.inside[t] = depth[t] % 2 == 1

    # -------------------------------------------------------------- refinement
    def _encroached(self, key):
        a, b = key
        X, Y = self.x, self.y
        for e in ((a, b), (b, a)):
            t = self.edges.get(e)
            if t is None or not self.inside[t]:
                continue
            w = [v for v in self.tris[t] if v != a and v != b][0]
            if (X[a] - X[w]) * (X[b] - X[w]) + (Y[a] - Y[w]) * (Y[b] - Y[w]) < 0.0:
                return True
        return False

    def _is_bad(self, t):
        a, b, c = self.tris[t]
        X, Y = self.x, self.y
        area = 0.5 * ((X[b] - X[a]) * (Y[c] - Y[a]) - (Y[b] - Y[a]) * (X[c] - X[a]))
        if area > self.max_area * (1.0 + _QUALITY_RTOL):
            return True
        # squared edge lengths, each opposite the named vertex
        la = (X[b] - X[c]) ** 2 + (Y[b] - Y[c]) ** 2
        lb = (X[c] - X[a]) ** 2 + (Y[c] - Y[a]) ** 2
        lc = (X[a] - X[b]) ** 2 + (Y[a] - Y[b]) ** 2
        if la <= lb and la <= lc:
            s, m, l, apex, o1, o2 = la, lb, lc, a, b, c
        elif lb <= lc:
            s, m, l, apex, o1, o2 = lb, la, lc, b, a, c
        else:
            s, m, l, apex, o1, o2 = lc, la, lb, c, a, b
        cos_t = (m + l - s) / (2.0 * math.sqrt(m * l))
        if cos_t <= self.cos_min + _QUALITY_RTOL:
            return False
        # an input corner bounded by two segments cannot be improved
        if _key(apex, o1) in self.constrained and _key(apex, o2) in self.constrained:
            return False
        return True

    def _split_point(self, a, b):
        X, Y = self.x, self.y
        ia, ib = self.is_input[a], self.is_input[b]
        if ia == ib:
            return 0.5 * (X[a] + X[b]), 0.5 * (Y[a] + Y[b])
        if ib:
            a, b = b, a
        length = math.hypot(X[b] - X[a], Y[b] - Y[a])
        d = 2.0 ** round(math.log2(0.5 * length))
        f = d / length
        if not 0.25 <= f <= 0.75:
            f = 0.5
        return X[a] + f * (X[b] - X[a]), Y[a] + f * (Y[b] - Y[a])

    def _split_segment(self, key):
        a, b = key
        t = self.edges.get((a, b))
        if t is None:
            t = self.edges[(b, a)]
        px, py = self._split_point(a, b)
        status, payload = self._insert(px, py, t, split_key=key)
        if status != "ok":
            raise InvalidRegion("failed to split a boundary segment")
        return payload[1]

    def refine(self):
        seg_q = deque()
        bad_q = deque()
        for k in sorted(self.constrained):
            if self._encroached(k):
                seg_q.append((k, False))
        for t, tri in enumerate(self.tris):
            if tri is not None and self.inside[t] and self._is_bad(t):
                bad_q.append(t)

        def audit(new):
            inside = self.inside
            tris = self.tris
            X, Y = self.x, self.y
            for nt in new:
                if not inside[nt]:
                    continue
                a, b, c = tris[nt]
                for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
                    if _key(u, v) in self.constrained:
                        if (X[u] - X[w]) * (X[v] - X[w]) + (Y[u] - Y[w]) * (Y[v] - Y[w]) < 0.0:
                            seg_q.append((_key(u, v), False))
                if self._is_bad(nt):
                    bad_q.append(nt)

        while True:
            if seg_q:
                key, forced = seg_q.popleft()
                if key not in self.constrained:
                    continue
                if not forced and not self._encroached(key):
                    continue
                audit(self._split_segment(key))
                continue
            if not bad_q:
                break
            t = bad_q.popleft()
            if self.tris[t] is None or not self._is_bad(t):
                continue
            cx, cy = self._circumcenter(t)
            status, payload = self._insert(cx, cy, t, check_encroach=True)
            if status == "ok":
                audit(payload[1])
            else:
                for k in payload:
                    seg_q.append((k, True))
                bad_q.append(t)

    # ------------------------------------------------------------------ output
    def result(self):
        """Return ``(vertices, triangles)`` for the inside of the domain."""
        keep = [tri for t, tri in enumerate(self.tris)
                if tri is not None and self.inside[t]]
        tri_arr = np.asarray(keep, dtype=np.int64).reshape(-1, 3)
        used, inverse = np.unique(tri_arr, return_inverse=True)
        verts = np.column_stack([np.asarray(self.x)[used], np.asarray(self.y)[used]])
        return verts, inverse.reshape(-1, 3)
