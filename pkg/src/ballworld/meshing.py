"""Constrained Delaunay triangulation of a PolyWorld with refinement.

The mesher subdivides every polygon edge to at most ``h_max``, recovers
all polygon edges as constrained edges, then refines by inserting
circumcenters until every free triangle has longest edge at most h_max and
minimum angle at least ``min_angle_deg``.  A circumcenter whose walk
crosses a constrained edge splits that subsegment instead (Ruppert's
rule).

Size constant: a triangle with edges <= h_max and angles >= q has
circumdiameter <= h_max / sin(q), so the documented bound is
c = 1 / sin(min_angle_deg) (2.93 at the default 20 degrees).  The
circumdiameter criterion is also enforced directly, so the bound holds
even where quality refinement gives up: angle refinement stops on
triangles whose shortest edge is below ``0.02 * h_max`` (sharp input
corners cannot reach the angle bound); size criteria are never waived.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from ._accel import cdt_core
from .errors import DegenerateInput, InvalidPolygon
from .geometry import (
    PolyWorld,
    TriMesh,
    interior_point,
    points_in_polygon,
    signed_area,
)

FREE = 0


def _clearance(world: PolyWorld, pts: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest polygon boundary, negative
    outside the free region (vectorized over points)."""
    d = np.full(len(pts), np.inf)
    for poly in [world.outer] + list(world.holes):
        a = poly
        b = np.roll(poly, -1, axis=0)
        e = b - a
        ee = np.maximum(np.einsum("ij,ij->i", e, e), 1e-300)
        for k in range(len(poly)):
            w = pts - a[k]
            t = np.clip((w @ e[k]) / ee[k], 0.0, 1.0)
            proj = w - t[:, None] * e[k][None, :]
            d = np.minimum(d, np.hypot(proj[:, 0], proj[:, 1]))
    inside = points_in_polygon(world.outer, pts)
    for h in world.holes:
        inside &= ~points_in_polygon(h, pts)
    return np.where(inside, d, -d)


def _interior_lattice(world: PolyWorld, h_max: float) -> np.ndarray:
    """Equilateral point lattice covering the free region, clipped away
    from all boundaries so the boundary band is left to refinement."""
    s = 0.95 * h_max
    dy = s * math.sqrt(3.0) / 2.0
    lo = world.outer.min(axis=0)
    hi = world.outer.max(axis=0)
    rows = []
    j = 0
    y = lo[1] + 0.5 * dy
    while y < hi[1]:
        x0 = lo[0] + (0.25 if j % 2 == 0 else 0.75) * s
        xs = np.arange(x0, hi[0], s)
        if len(xs):
            rows.append(np.column_stack([xs, np.full(len(xs), y)]))
        y += dy
        j += 1
    if not rows:
        return np.empty((0, 2))
    pts = np.vstack(rows)
    keep = _clearance(world, pts) >= 0.8 * s
    return pts[keep]


def _subdivide_polygon(poly: np.ndarray, step: float) -> np.ndarray:
    pts = []
    n = len(poly)
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        length = math.hypot(b[0] - a[0], b[1] - a[1])
        pieces = max(1, int(math.ceil(length / step)))
        for k in range(pieces):
            t = k / pieces
            pts.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
    return np.asarray(pts)


def _offcenter(u, w, cc, cap):
    """Point on the bisector of edge (u, w), at most ``cap`` past the edge
    midpoint toward the circumcenter (the circumcenter itself if closer)."""
    mx, my = 0.5 * (u[0] + w[0]), 0.5 * (u[1] + w[1])
    dx, dy = cc[0] - mx, cc[1] - my
    d = math.hypot(dx, dy)
    if d <= cap or d < 1e-300:
        return cc
    s = cap / d
    return (mx + s * dx, my + s * dy)


def _circumcenter(ax, ay, bx, by, cx, cy):
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-300:
        return None
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
          + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
          + (cx * cx + cy * cy) * (bx - ax)) / d
    return ux, uy


def triangulate(world: PolyWorld, h_max: float, min_angle_deg: float = 20.0) -> TriMesh:
    """Mesh the free region of ``world`` with maximum circumdiameter h_max.

    Returns a TriMesh whose boundary_loops[0] follows the outer polygon and
    loop j >= 1 follows hole j - 1.  All polygon edges appear as unions of
    mesh edges.
    """
    if h_max <= 0:
        raise DegenerateInput("h_max must be positive")
    polys = [world.outer] + list(world.holes)
    chains = [_subdivide_polygon(p, h_max) for p in polys]

    allpts = np.vstack(chains)
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    core = cdt_core.DelaunayCore(lo[0], lo[1], hi[0], hi[1])

    chain_ids = []
    for chain in chains:
        ids = []
        for (x, y) in chain:
            v = core.insert(float(x), float(y))
            if v < 0:
                raise DegenerateInput("boundary point insertion failed")
            ids.append(v)
        chain_ids.append(ids)
    for (x, y) in _interior_lattice(world, h_max):
        core.insert(float(x), float(y))
    for label, ids in enumerate(chain_ids):
        n = len(ids)
        for i in range(n):
            core.insert_segment(ids[i], ids[(i + 1) % n], label)

    core.classify([interior_point(h) for h in world.holes])
    _refine(core, h_max, min_angle_deg)

    verts, faces, cons = core.compact()
    vertices = np.asarray(verts, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    loops = _chain_loops(vertices, cons, len(polys))
    return TriMesh(vertices, faces, loops, h_max)


def _refine(core, h_max, min_angle_deg, max_insertions=400_000):
    sin_min = math.sin(math.radians(min_angle_deg))
    e_max2 = h_max * h_max
    r_cap2 = (0.5 * h_max / sin_min) ** 2  # direct circumradius cap
    floor2 = (0.02 * h_max) ** 2
    beta = 0.5 / sin_min  # radius-edge quality target
    off_q = beta + math.sqrt(max(beta * beta - 0.25, 0.0))
    given_up = set()

    def badness(t):
        """(insertion point, constrained edge to split) for a bad triangle,
        else (None, None).

        Off-center insertion (instead of plain circumcenters) keeps the
        final triangle count close to size-optimal."""
        vs = core.triangle(t)
        a, b, c = vs
        ax, ay = core.vx[a], core.vy[a]
        bx, by = core.vx[b], core.vy[b]
        cx, cy = core.vx[c], core.vy[c]
        cc = _circumcenter(ax, ay, bx, by, cx, cy)
        if cc is None:
            return None, None
        r2 = (cc[0] - ax) ** 2 + (cc[1] - ay) ** 2
        pts = ((ax, ay), (bx, by), (cx, cy))
        e2 = []
        for k in range(3):
            u, w = pts[(k + 1) % 3], pts[(k + 2) % 3]
            e2.append((w[0] - u[0]) ** 2 + (w[1] - u[1]) ** 2)
        if max(e2) > e_max2 or r2 > r_cap2:
            k = max(range(3), key=lambda i: e2[i])
            va, vb = vs[(k + 1) % 3], vs[(k + 2) % 3]
            key = (va, vb) if va < vb else (vb, va)
            if key in core.constrained:
                return None, key
            u, w = pts[(k + 1) % 3], pts[(k + 2) % 3]
            cap = math.sqrt(max((0.95 * h_max) ** 2 - 0.25 * e2[k], 0.0))
            return _offcenter(u, w, cc, cap), None
        emin2 = min(e2)
        if emin2 <= floor2:
            return None, None
        # min angle: sin(angle at A) = opposite / (2R); smallest angle is
        # opposite the shortest edge
        if emin2 / (4.0 * r2) < sin_min * sin_min:
            k = min(range(3), key=lambda i: e2[i])
            u, w = pts[(k + 1) % 3], pts[(k + 2) % 3]
            cap = off_q * math.sqrt(emin2)
            return _offcenter(u, w, cc, cap), None
        return None, None

    def split_constraint(ca, cb):
        seg2 = (core.vx[ca] - core.vx[cb]) ** 2 + (core.vy[ca] - core.vy[cb]) ** 2
        if seg2 < 4.0 * floor2:
            return -1
        ex = 0.5 * (core.vx[ca] + core.vx[cb])
        ey = 0.5 * (core.vy[ca] + core.vy[cb])
        return core.insert_on_constraint(ca, cb, ex, ey)

    queue = deque(core.free_triangles())
    inserted = 0
    while queue:
        t = queue.popleft()
        if not core.alive[t] or core.tclass[t] != FREE:
            continue
        key = tuple(sorted(core.triangle(t)))
        if key in given_up:
            continue
        cc, cedge = badness(t)
        if cc is None and cedge is None:
            continue
        if inserted >= max_insertions:
            raise DegenerateInput("mesh refinement did not terminate")
        if cedge is not None:
            v = split_constraint(*cedge)
            if v < 0:
                given_up.add(key)
                continue
            inserted += 1
            queue.extend(core.last_new)
            continue
        loc, ca, cb = core.locate(cc[0], cc[1], hint=t, stop_at_constraint=True)
        if loc == -2:
            # insertion point hides behind constrained edge (ca, cb): split it
            v = split_constraint(ca, cb)
            if v < 0:
                given_up.add(key)
                continue
            inserted += 1
            queue.append(t)
            queue.extend(core.last_new)
        elif loc < 0:
            given_up.add(key)
        else:
            near, d2 = core.nearest_vertex_in(loc, cc[0], cc[1])
            if d2 <= core.dup_tol2 or core.tclass[loc] != FREE:
                given_up.add(key)
                continue
            v = core._insert_in([loc], cc[0], cc[1], None, encroach_check=True)
            if v == -3:
                v = split_constraint(*core.pending_split)
                if v < 0:
                    given_up.add(key)
                    continue
                inserted += 1
                queue.append(t)
                queue.extend(core.last_new)
                continue
            if v < 0:
                given_up.add(key)
                continue
            inserted += 1
            queue.append(t)
            queue.extend(core.last_new)


def _chain_loops(vertices: np.ndarray, cons: list, n_polys: int) -> tuple:
    """Assemble constraint subsegments into one vertex cycle per polygon.
    Loop 0 is oriented CCW (positive area), holes CW (negative area)."""
    loops = []
    for label in range(n_polys):
        adj = {}
        for (a, b, lab) in cons:
            if lab != label:
                continue
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        if not adj:
            raise InvalidPolygon(f"boundary loop {label} lost during meshing")
        start = min(adj)
        cycle = [start]
        prev, cur = -1, start
        for _ in range(len(adj) + 1):
            nbrs = adj[cur]
            nxt = nbrs[0] if nbrs[0] != prev else nbrs[1]
            if nxt == start:
                break
            cycle.append(nxt)
            prev, cur = cur, nxt
        else:
            raise InvalidPolygon(f"boundary loop {label} is not a simple cycle")
        area = signed_area(vertices[cycle])
        want_ccw = label == 0
        if (area > 0) != want_ccw:
            cycle = [cycle[0]] + cycle[1:][::-1]
        loops.append(np.asarray(cycle, dtype=np.int64))
    return tuple(loops)
