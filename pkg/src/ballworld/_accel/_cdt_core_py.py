"""Incremental constrained Delaunay triangulation, pure-Python lane.

Bowyer-Watson point insertion with cavity search, Sloan-style edge
recovery by flips, and bookkeeping for constrained (boundary) edges and
region classes.  The compiled lane in ``_cdt_core`` mirrors this class
operation for operation; keep the two in sync.

Region classes: 0 = free interior, 1 = outside the outer boundary,
2 = inside a hole.
"""

FREE = 0
OUTSIDE = 1
HOLE = 2


class DelaunayCore:
    def __init__(self, xmin, ymin, xmax, ymax):
        span = max(xmax - xmin, ymax - ymin, 1e-9)
        cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
        r = 4.0 * span
        self.scale = span
        self.eps2 = 1e-12 * span * span      # orientation threshold
        self.dup_tol2 = (1e-12 * span) ** 2  # duplicate-vertex threshold
        # vertices 0..3 are the super-box corners
        self.vx = [cx - r, cx + r, cx + r, cx - r]
        self.vy = [cy - r, cy - r, cy + r, cy + r]
        # two CCW triangles covering the box
        self.tv = [[0, 1, 2], [0, 2, 3]]
        self.tn = [[-1, 1, -1], [-1, -1, 0]]
        self.tclass = [FREE, FREE]
        self.alive = [True, True]
        self.free_slots = []
        self.v2t = [0, 0, 1, 1]
        self.constrained = {}  # (min,max) vertex pair -> polygon label
        self.last = 0
        self.last_new = []  # triangles created by the most recent insertion
        self.pending_split = None  # constrained edge rejected as encroached

    # -- predicates ---------------------------------------------------------

    def _orient(self, ax, ay, bx, by, cx, cy):
        return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)

    def _in_circumcircle(self, a, b, c, px, py):
        """True if (px, py) is strictly inside the circumcircle of CCW
        triangle (a, b, c), with a relative tolerance."""
        adx = self.vx[a] - px
        ady = self.vy[a] - py
        bdx = self.vx[b] - px
        bdy = self.vy[b] - py
        cdx = self.vx[c] - px
        cdy = self.vy[c] - py
        aa = adx * adx + ady * ady
        bb = bdx * bdx + bdy * bdy
        cc = cdx * cdx + cdy * cdy
        det = (aa * (bdx * cdy - cdx * bdy)
               + bb * (cdx * ady - adx * cdy)
               + cc * (adx * bdy - bdx * ady))
        mag = (aa * (abs(bdx * cdy) + abs(cdx * bdy))
               + bb * (abs(cdx * ady) + abs(adx * cdy))
               + cc * (abs(adx * bdy) + abs(bdx * ady)))
        return det > 1e-12 * mag

    # -- location -----------------------------------------------------------

    def _any_alive(self):
        return next(i for i, al in enumerate(self.alive) if al)

    def locate(self, px, py, hint=-1, stop_at_constraint=False):
        """Walk to the triangle containing (px, py).

        Returns ``(tri, ca, cb)``: tri >= 0 on success with ca = cb = -1;
        tri = -2 with (ca, cb) when ``stop_at_constraint`` and the walk hit
        constrained edge (ca, cb); tri = -1 when the walk left the mesh.
        """
        t = hint if 0 <= hint < len(self.alive) and self.alive[hint] else self.last
        if t >= len(self.alive) or not self.alive[t]:
            t = self._any_alive()
        prev = -1
        vx, vy = self.vx, self.vy
        eps = self.eps2
        for _ in range(4 * len(self.tv) + 64):
            a, b, c = self.tv[t]
            worst = -eps
            k = -1
            o = self._orient(vx[b], vy[b], vx[c], vy[c], px, py)
            if o < worst:
                worst, k = o, 0
            o = self._orient(vx[c], vy[c], vx[a], vy[a], px, py)
            if o < worst:
                worst, k = o, 1
            o = self._orient(vx[a], vy[a], vx[b], vy[b], px, py)
            if o < worst:
                worst, k = o, 2
            if k < 0:
                self.last = t
                return t, -1, -1
            nxt = self.tn[t][k]
            if nxt < 0:
                return -1, -1, -1
            if stop_at_constraint:
                tri = self.tv[t]
                u, w = tri[(k + 1) % 3], tri[(k + 2) % 3]
                key = (u, w) if u < w else (w, u)
                if key in self.constrained:
                    return -2, key[0], key[1]
            if nxt == prev:
                self.last = t
                return t, -1, -1
            prev, t = t, nxt
        self.last = t
        return t, -1, -1

    def nearest_vertex_in(self, t, px, py):
        best, bd = -1, -1.0
        for v in self.tv[t]:
            d = (self.vx[v] - px) ** 2 + (self.vy[v] - py) ** 2
            if bd < 0 or d < bd:
                best, bd = v, d
        return best, bd

    # -- insertion ----------------------------------------------------------

    def insert(self, px, py, hint=-1):
        """Insert a point, returning its vertex index.  Returns the existing
        index when the point duplicates a vertex, -1 when outside the mesh,
        -2 when the cavity is numerically invalid (caller may skip)."""
        t, _, _ = self.locate(px, py, hint)
        if t < 0:
            return -1
        v, d2 = self.nearest_vertex_in(t, px, py)
        if d2 <= self.dup_tol2:
            return v
        return self._insert_in([t], px, py, None)

    def insert_on_constraint(self, a, b, px, py):
        """Insert a point lying on constrained edge (a, b), splitting the
        constraint into (a, v) and (v, b)."""
        key = (a, b) if a < b else (b, a)
        label = self.constrained[key]
        t1 = self._ring_find(a, b)
        if t1 < 0:
            raise RuntimeError(f"constrained edge ({a},{b}) not in mesh")
        k = self._edge_slot(t1, a, b)
        t2 = self.tn[t1][k]
        seeds = [t1] if t2 < 0 else [t1, t2]
        del self.constrained[key]
        v = self._insert_in(seeds, px, py, key)
        if v < 0:
            self.constrained[key] = label
            return v
        k1 = (a, v) if a < v else (v, a)
        k2 = (b, v) if b < v else (v, b)
        self.constrained[k1] = label
        self.constrained[k2] = label
        return v

    def _edge_slot(self, t, a, b):
        vs = self.tv[t]
        for k in range(3):
            if vs[k] != a and vs[k] != b:
                return k
        raise RuntimeError("triangle does not carry the edge")

    def _insert_in(self, seeds, px, py, open_constraint, encroach_check=False):
        """Bowyer-Watson insertion. ``open_constraint`` names one constrained
        edge the cavity may cross (used when splitting that constraint).

        With ``encroach_check``, a point inside the diametral circle of a
        constrained cavity-boundary edge is rejected with return value -3
        and the offending edge stored in ``pending_split`` (Ruppert's
        encroachment rule; such edges always show up on the cavity boundary
        because the cavity search stops at constraints)."""
        vx, vy = self.vx, self.vy
        tv, tn = self.tv, self.tn
        cavity = list(seeds)
        in_cavity = set(seeds)
        stack = list(seeds)
        while stack:
            s = stack.pop()
            svs = tv[s]
            sns = tn[s]
            for k in range(3):
                n = sns[k]
                if n < 0 or n in in_cavity:
                    continue
                u, w = svs[(k + 1) % 3], svs[(k + 2) % 3]
                key = (u, w) if u < w else (w, u)
                if key in self.constrained and key != open_constraint:
                    continue
                na, nb, nc = tv[n]
                if self._in_circumcircle(na, nb, nc, px, py):
                    in_cavity.add(n)
                    cavity.append(n)
                    stack.append(n)
        boundary = []
        for s in cavity:
            svs = tv[s]
            sns = tn[s]
            for k in range(3):
                n = sns[k]
                if n >= 0 and n in in_cavity:
                    continue
                u, w = svs[(k + 1) % 3], svs[(k + 2) % 3]
                boundary.append((u, w, n, self.tclass[s]))
        if encroach_check:
            for (u, w, _, _) in boundary:
                key = (u, w) if u < w else (w, u)
                if key in self.constrained:
                    mx = 0.5 * (vx[u] + vx[w])
                    my = 0.5 * (vy[u] + vy[w])
                    r2 = 0.25 * ((vx[u] - vx[w]) ** 2 + (vy[u] - vy[w]) ** 2)
                    if (px - mx) ** 2 + (py - my) ** 2 < r2 * (1.0 - 1e-12):
                        self.pending_split = key
                        return -3
        # validate the cavity is star-shaped around p before mutating
        for (u, w, _, _) in boundary:
            if self._orient(vx[u], vy[u], vx[w], vy[w], px, py) <= 0:
                return -2
        vnew = len(vx)
        vx.append(px)
        vy.append(py)
        self.v2t.append(-1)
        for s in cavity:
            self.alive[s] = False
            self.free_slots.append(s)
        start = {}
        new_ids = []
        for (u, w, n, cls) in boundary:
            ti = self._new_tri(u, w, vnew, cls)
            new_ids.append(ti)
            tn = self.tn  # may have grown
            tn[ti][2] = n  # across edge (u, w), opposite vnew
            if n >= 0:
                nvs = self.tv[n]
                for k in range(3):
                    if nvs[(k + 1) % 3] == w and nvs[(k + 2) % 3] == u:
                        tn[n][k] = ti
                        break
            start[u] = ti
        tv, tn = self.tv, self.tn
        for ti in new_ids:
            u, w, _ = tv[ti]
            nxt = start[w]   # triangle whose first vertex is w
            tn[ti][0] = nxt  # across edge (w, vnew), opposite u
            tn[nxt][1] = ti  # across edge (vnew, w) of nxt, opposite its 2nd vertex
        for ti in new_ids:
            for v in tv[ti]:
                self.v2t[v] = ti
        self.last = new_ids[0]
        self.last_new = new_ids
        return vnew

    def _new_tri(self, a, b, c, cls):
        if self.free_slots:
            ti = self.free_slots.pop()
            self.tv[ti] = [a, b, c]
            self.tn[ti] = [-1, -1, -1]
            self.tclass[ti] = cls
            self.alive[ti] = True
            return ti
        self.tv.append([a, b, c])
        self.tn.append([-1, -1, -1])
        self.tclass.append(cls)
        self.alive.append(True)
        return len(self.tv) - 1

    # -- edge recovery --------------------------------------------------------

    def _star(self, a):
        """All alive triangles incident to vertex a."""
        t0 = self.v2t[a]
        if t0 < 0 or t0 >= len(self.alive) or not self.alive[t0] or a not in self.tv[t0]:
            t0 = -1
            for i, al in enumerate(self.alive):
                if al and a in self.tv[i]:
                    t0 = i
                    break
            if t0 < 0:
                return []
        out = []
        seen = {t0}
        stack = [t0]
        while stack:
            s = stack.pop()
            out.append(s)
            for n in self.tn[s]:
                if n >= 0 and n not in seen and self.alive[n] and a in self.tv[n]:
                    seen.add(n)
                    stack.append(n)
        return out

    def _ring_find(self, a, b):
        """An alive triangle containing edge (a, b), or -1."""
        for s in self._star(a):
            if b in self.tv[s]:
                return s
        return -1

    def edge_exists(self, a, b):
        return self._ring_find(a, b) >= 0

    def insert_segment(self, a, b, label):
        """Force edge (a, b) into the triangulation and mark it constrained.
        Vertices lying exactly on the segment split it recursively."""
        if a == b:
            return
        guard = 0
        while not self.edge_exists(a, b):
            guard += 1
            if guard > 20000:
                raise RuntimeError(f"failed to recover segment ({a},{b})")
            m = self._recovery_step(a, b)
            if m >= 0:
                self.insert_segment(a, m, label)
                self.insert_segment(m, b, label)
                return
        key = (a, b) if a < b else (b, a)
        self.constrained[key] = label

    def _on_segment(self, ax, ay, bx, by, m):
        mx, my = self.vx[m], self.vy[m]
        cross = (bx - ax) * (my - ay) - (by - ay) * (mx - ax)
        if abs(cross) > self.eps2:
            return False
        dot = (mx - ax) * (bx - ax) + (my - ay) * (by - ay)
        L2 = (bx - ax) ** 2 + (by - ay) ** 2
        return 0.0 < dot < L2

    def _crosses(self, ax, ay, bx, by, u, w):
        ux, uy = self.vx[u], self.vy[u]
        wx, wy = self.vx[w], self.vy[w]
        d1 = self._orient(ax, ay, bx, by, ux, uy)
        d2 = self._orient(ax, ay, bx, by, wx, wy)
        d3 = self._orient(ux, uy, wx, wy, ax, ay)
        d4 = self._orient(ux, uy, wx, wy, bx, by)
        e = self.eps2
        return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) \
            and abs(d1) > e and abs(d2) > e and abs(d3) > e and abs(d4) > e

    def _recovery_step(self, a, b):
        """One recovery step for segment (a, b): flip a crossing edge, or
        return a vertex found lying on the open segment (else -1)."""
        ax, ay = self.vx[a], self.vy[a]
        bx, by = self.vx[b], self.vy[b]
        for s in self._star(a):
            vs = self.tv[s]
            k = vs.index(a)
            u, w = vs[(k + 1) % 3], vs[(k + 2) % 3]
            if u != b and self._on_segment(ax, ay, bx, by, u):
                return u
            if w != b and self._on_segment(ax, ay, bx, by, w):
                return w
            if self._crosses(ax, ay, bx, by, u, w):
                return self._flip_walk(s, k, a, b)
        raise RuntimeError(f"no crossing edge found for segment ({a},{b})")

    def _flip_walk(self, t, k, a, b):
        """Walk the triangles crossed by segment (a, b), flipping the first
        flippable crossing edge.  Returns an on-segment vertex if one is
        encountered, else -1 after a flip."""
        ax, ay = self.vx[a], self.vy[a]
        bx, by = self.vx[b], self.vy[b]
        for _ in range(20000):
            vs = self.tv[t]
            u, w = vs[(k + 1) % 3], vs[(k + 2) % 3]
            key = (u, w) if u < w else (w, u)
            if key in self.constrained:
                raise RuntimeError(f"segment ({a},{b}) crosses constraint {key}")
            n = self.tn[t][k]
            if n < 0:
                raise RuntimeError("segment crossing left the mesh")
            if self._flippable(t, k):
                self._flip(t, k)
                return -1
            nvs = self.tv[n]
            kk = next(i for i in range(3) if self.tn[n][i] == t)
            apex = nvs[kk]
            if apex != b and self._on_segment(ax, ay, bx, by, apex):
                return apex
            if apex == b:
                raise RuntimeError("unflippable terminal crossing")
            e1u, e1w = nvs[(kk + 1) % 3], apex
            e2u, e2w = apex, nvs[(kk + 2) % 3]
            if self._crosses(ax, ay, bx, by, e1u, e1w):
                t, k = n, (kk + 2) % 3
            elif self._crosses(ax, ay, bx, by, e2u, e2w):
                t, k = n, (kk + 1) % 3
            else:
                raise RuntimeError("lost the segment during recovery")
        raise RuntimeError("flip walk did not terminate")

    def _flippable(self, t, k):
        n = self.tn[t][k]
        if n < 0:
            return False
        vs = self.tv[t]
        c = vs[k]
        u, w = vs[(k + 1) % 3], vs[(k + 2) % 3]
        nvs = self.tv[n]
        kk = next(i for i in range(3) if self.tn[n][i] == t)
        d = nvs[kk]
        e = self.eps2
        vx, vy = self.vx, self.vy
        # flip produces triangles (c,u,d) and (c,d,w); both must be CCW
        return (self._orient(vx[c], vy[c], vx[u], vy[u], vx[d], vy[d]) > e
                and self._orient(vx[c], vy[c], vx[d], vy[d], vx[w], vy[w]) > e)

    def _flip(self, t, k):
        """Flip the edge opposite local vertex k of triangle t."""
        n = self.tn[t][k]
        vs = self.tv[t]
        c = vs[k]
        u, w = vs[(k + 1) % 3], vs[(k + 2) % 3]
        nvs = self.tv[n]
        kk = next(i for i in range(3) if self.tn[n][i] == t)
        d = nvs[kk]
        t_cu = self._neighbor_across(t, c, u)
        t_wc = self._neighbor_across(t, w, c)
        n_ud = self._neighbor_across(n, u, d)
        n_dw = self._neighbor_across(n, d, w)
        self.tv[t] = [c, u, d]
        self.tv[n] = [c, d, w]
        self.tclass[n] = self.tclass[t]
        self.tn[t] = [n_ud, n, t_cu]
        self.tn[n] = [n_dw, t_wc, t]
        for nb, newt, old in ((n_ud, t, n), (t_cu, t, t), (n_dw, n, n), (t_wc, n, t)):
            if nb >= 0:
                for i in range(3):
                    if self.tn[nb][i] == old:
                        self.tn[nb][i] = newt
                        break
        for v in (c, u, d):
            self.v2t[v] = t
        self.v2t[w] = n

    def _neighbor_across(self, t, a, b):
        vs = self.tv[t]
        for k in range(3):
            if vs[k] != a and vs[k] != b:
                return self.tn[t][k]
        return -1

    # -- classification -------------------------------------------------------

    def classify(self, hole_seeds):
        """Flood-fill region classes.  Triangles reachable from the super
        vertices without crossing constraints become OUTSIDE; floods from
        each hole seed point mark HOLE; the rest stays FREE."""
        for i, al in enumerate(self.alive):
            if al:
                self.tclass[i] = FREE
        outside = [i for i, al in enumerate(self.alive)
                   if al and (self.tv[i][0] < 4 or self.tv[i][1] < 4 or self.tv[i][2] < 4)]
        self._flood(outside, OUTSIDE)
        for (sx, sy) in hole_seeds:
            t, _, _ = self.locate(sx, sy)
            if t >= 0 and self.tclass[t] == FREE:
                self._flood([t], HOLE)

    def _flood(self, seeds, cls):
        stack = list(seeds)
        for s in seeds:
            self.tclass[s] = cls
        while stack:
            s = stack.pop()
            svs = self.tv[s]
            for k in range(3):
                n = self.tn[s][k]
                if n < 0 or not self.alive[n] or self.tclass[n] == cls:
                    continue
                u, w = svs[(k + 1) % 3], svs[(k + 2) % 3]
                key = (u, w) if u < w else (w, u)
                if key in self.constrained:
                    continue
                self.tclass[n] = cls
                stack.append(n)

    # -- output -----------------------------------------------------------------

    def free_triangles(self):
        return [i for i, al in enumerate(self.alive) if al and self.tclass[i] == FREE]

    def triangle(self, t):
        return self.tv[t]

    def compact(self):
        """Vertices, faces, and constraint list of the FREE region with
        vertices renumbered densely (sorted by original insertion order)."""
        tris = self.free_triangles()
        used = sorted({v for t in tris for v in self.tv[t]})
        remap = {v: i for i, v in enumerate(used)}
        verts = [(self.vx[v], self.vy[v]) for v in used]
        faces = [[remap[v] for v in self.tv[t]] for t in tris]
        cons = [(remap[a], remap[b], lab) for (a, b), lab in sorted(self.constrained.items())
                if a in remap and b in remap]
        return verts, faces, cons
