"""Polygonal worlds, triangle meshes, and piecewise-linear maps.

Conventions: the outer boundary of a :class:`PolyWorld` is stored
counterclockwise, holes clockwise (normalized on ingestion).  All
coordinates are meters.  Values are immutable after construction and all
operations here are pure functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    DegenerateInput,
    InvalidPolygon,
    NonManifoldInput,
    OutsideDomain,
    SingularFace,
)

# ---------------------------------------------------------------------------
# polygon primitives


def signed_area(poly: np.ndarray) -> float:
    """Signed area of a closed polygon given as an (n, 2) vertex array."""
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    """Area centroid of a simple polygon."""
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    if abs(a) < 1e-300:
        return poly.mean(axis=0)
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def _segments_properly_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def polygon_is_simple(poly: np.ndarray) -> bool:
    """True if no two non-adjacent edges intersect (O(n^2) scan)."""
    n = len(poly)
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = poly[j], poly[(j + 1) % n]
            if _segments_properly_intersect(a1, a2, b1, b2):
                return False
    return True


def point_in_polygon(poly: np.ndarray, p) -> bool:
    """Even-odd crossing test. Boundary points count as inside."""
    x, y = float(p[0]), float(p[1])
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            t = (y - y1) / (y2 - y1)
            xi = x1 + t * (x2 - x1)
            if x < xi:
                inside = not inside
            elif abs(x - xi) < 1e-14:
                return True
    return inside


def points_in_polygon(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Vectorized even-odd test for an (m, 2) point array."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        mask = (y1 > y) != (y2 > y)
        if not mask.any():
            continue
        t = (y[mask] - y1) / (y2 - y1)
        xi = x1 + t * (x2 - x1)
        flip = np.zeros(len(pts), dtype=bool)
        flip[mask] = x[mask] < xi
        inside ^= flip
    return inside


def interior_point(poly: np.ndarray) -> tuple:
    """A point strictly inside a simple polygon (centroid, or the centroid
    of the first convex ear for non-convex shapes)."""
    c = poly.mean(axis=0)
    if point_in_polygon(poly, c):
        return float(c[0]), float(c[1])
    n = len(poly)
    ccw = signed_area(poly) > 0
    for k in range(n):
        a, b, c3 = poly[(k - 1) % n], poly[k], poly[(k + 1) % n]
        cross = (b[0] - a[0]) * (c3[1] - a[1]) - (b[1] - a[1]) * (c3[0] - a[0])
        if (cross > 0) == ccw and abs(cross) > 1e-14:
            m = (a + b + c3) / 3.0
            if point_in_polygon(poly, m):
                return float(m[0]), float(m[1])
    raise DegenerateInput("could not find an interior point of the polygon")


def distance_to_polygon(poly: np.ndarray, p) -> float:
    """Euclidean distance from point p to the polygon's boundary."""
    p = np.asarray(p, dtype=float)
    a = poly
    b = np.roll(poly, -1, axis=0)
    e = b - a
    w = p[None, :] - a
    ee = np.einsum("ij,ij->i", e, e)
    t = np.clip(np.einsum("ij,ij->i", w, e) / np.maximum(ee, 1e-300), 0.0, 1.0)
    proj = a + t[:, None] * e
    d = np.hypot(*(p[None, :] - proj).T)
    return float(d.min())


def signed_distance_to_obstacle(poly: np.ndarray, p) -> float:
    """Positive outside the obstacle polygon, negative inside."""
    d = distance_to_polygon(poly, p)
    return -d if point_in_polygon(poly, p) else d


# ---------------------------------------------------------------------------
# PolyWorld


@dataclass(frozen=True)
class PolyWorld:
    """Polygonal workspace with polygonal holes (the real world).

    ``outer`` is normalized counterclockwise, every hole clockwise.
    Construction validates simplicity, containment, and disjointness.
    """

    outer: np.ndarray
    holes: tuple = ()

    def __post_init__(self):
        outer = np.asarray(self.outer, dtype=float)
        if outer.ndim != 2 or outer.shape[1] != 2 or len(outer) < 3:
            raise InvalidPolygon("outer boundary needs at least 3 vertices")
        a = signed_area(outer)
        if abs(a) < 1e-12:
            raise DegenerateInput("outer polygon has zero area")
        if a < 0:
            outer = outer[::-1].copy()
        if not polygon_is_simple(outer):
            raise InvalidPolygon("outer boundary is self-intersecting")
        holes = []
        for k, h in enumerate(self.holes):
            h = np.asarray(h, dtype=float)
            if h.ndim != 2 or h.shape[1] != 2 or len(h) < 3:
                raise InvalidPolygon(f"hole {k} needs at least 3 vertices")
            ah = signed_area(h)
            if abs(ah) < 1e-12:
                raise DegenerateInput(f"hole {k} has zero area")
            if ah > 0:
                h = h[::-1].copy()
            if not polygon_is_simple(h):
                raise InvalidPolygon(f"hole {k} is self-intersecting")
            holes.append(h)
        # containment and pairwise disjointness
        for k, h in enumerate(holes):
            for v in h:
                if not point_in_polygon(outer, v) or distance_to_polygon(outer, v) < 1e-12:
                    raise InvalidPolygon(f"hole {k} is not strictly inside the outer boundary")
            for e0, e1 in zip(h, np.roll(h, -1, axis=0)):
                for f0, f1 in zip(outer, np.roll(outer, -1, axis=0)):
                    if _segments_properly_intersect(e0, e1, f0, f1):
                        raise InvalidPolygon(f"hole {k} crosses the outer boundary")
        for j in range(len(holes)):
            for k in range(j + 1, len(holes)):
                hj, hk = holes[j], holes[k]
                if point_in_polygon(hk, hj[0]) or point_in_polygon(hj, hk[0]):
                    raise InvalidPolygon(f"holes {j} and {k} overlap")
                for e0, e1 in zip(hj, np.roll(hj, -1, axis=0)):
                    for f0, f1 in zip(hk, np.roll(hk, -1, axis=0)):
                        if _segments_properly_intersect(e0, e1, f0, f1):
                            raise InvalidPolygon(f"holes {j} and {k} overlap")
        outer.setflags(write=False)
        for h in holes:
            h.setflags(write=False)
        object.__setattr__(self, "outer", outer)
        object.__setattr__(self, "holes", tuple(holes))

    @property
    def free_area(self) -> float:
        return signed_area(self.outer) + sum(signed_area(h) for h in self.holes)

    def contains(self, p, margin: float = 0.0) -> bool:
        """True if p is in the free space with clearance >= margin."""
        return self.free_signed_distance(p) >= margin

    def free_signed_distance(self, p) -> float:
        """Signed clearance: positive in free space, negative in obstacles
        or outside the outer boundary."""
        d_out = distance_to_polygon(self.outer, p)
        sd = d_out if point_in_polygon(self.outer, p) else -d_out
        for h in self.holes:
            sd = min(sd, signed_distance_to_obstacle(h, p))
        return sd

    def add_hole(self, poly) -> "PolyWorld":
        return PolyWorld(self.outer, self.holes + (np.asarray(poly, dtype=float),))

    @staticmethod
    def from_json(doc) -> "PolyWorld":
        """Build from ``{"outer": [[x,y],...], "holes": [[[x,y],...], ...]}``."""
        if isinstance(doc, (str, bytes)):
            doc = json.loads(doc)
        if "outer" not in doc:
            raise InvalidPolygon("world document is missing the 'outer' key")
        return PolyWorld(np.asarray(doc["outer"], dtype=float),
                         tuple(np.asarray(h, dtype=float) for h in doc.get("holes", [])))

    def to_json(self) -> dict:
        return {"outer": self.outer.tolist(), "holes": [h.tolist() for h in self.holes]}


# ---------------------------------------------------------------------------
# TriMesh


@dataclass(frozen=True)
class TriMesh:
    """Triangulation of a PolyWorld's free region.

    ``boundary_loops[0]`` is the outer loop, loop j >= 1 follows hole j.
    ``fill_faces`` flags faces added by :func:`fill_holes`.
    """

    vertices: np.ndarray
    faces: np.ndarray
    boundary_loops: tuple
    h_max: float
    fill_faces: np.ndarray = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        loops = tuple(np.asarray(l, dtype=np.int64) for l in self.boundary_loops)
        object.__setattr__(self, "boundary_loops", loops)
        if self.fill_faces is None:
            object.__setattr__(self, "fill_faces", np.zeros(len(f), dtype=bool))
        else:
            ff = np.asarray(self.fill_faces, dtype=bool)
            object.__setattr__(self, "fill_faces", ff)
        areas = self.areas
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise DegenerateInput(f"face {bad} has non-positive area {areas[bad]:.3e}")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    @cached_property
    def edge_basis_inv(self) -> np.ndarray:
        """Per-face inverse of [[v1-v0, v2-v0]] used for barycentric coords."""
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        m = np.empty((self.n_faces, 2, 2))
        m[:, :, 0] = b - a
        m[:, :, 1] = c - a
        det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
        inv = np.empty_like(m)
        inv[:, 0, 0] = m[:, 1, 1]
        inv[:, 0, 1] = -m[:, 0, 1]
        inv[:, 1, 0] = -m[:, 1, 0]
        inv[:, 1, 1] = m[:, 0, 0]
        return inv / det[:, None, None]

    @cached_property
    def adjacency(self) -> np.ndarray:
        """(F, 3) neighbor face across the edge opposite local vertex k, -1 if none."""
        edge_owner = {}
        adj = np.full((self.n_faces, 3), -1, dtype=np.int64)
        for fi, (a, b, c) in enumerate(self.faces):
            for k, (u, w) in enumerate(((b, c), (c, a), (a, b))):
                key = (u, w) if u < w else (w, u)
                if key in edge_owner:
                    fj, kj = edge_owner.pop(key)
                    adj[fi, k] = fj
                    adj[fj, kj] = fi
                else:
                    edge_owner[key] = (fi, k)
        return adj

    @cached_property
    def _grid(self):
        cell = max(self.h_max, 1e-9)
        lo = self.vertices.min(axis=0) - 1e-9
        hi = self.vertices.max(axis=0) + 1e-9
        nx = max(1, int(np.ceil((hi[0] - lo[0]) / cell)))
        ny = max(1, int(np.ceil((hi[1] - lo[1]) / cell)))
        return _FaceGrid(self.vertices, self.faces, lo, cell, nx, ny)

    def locate(self, p, hint: int | None = None):
        """Face index and barycentric coords of p. See :func:`locate`."""
        return locate(self, p, hint)

    def euler_characteristic(self) -> int:
        edges = set()
        for a, b, c in self.faces:
            for u, w in ((a, b), (b, c), (c, a)):
                edges.add((u, w) if u < w else (w, u))
        return self.n_vertices - len(edges) + self.n_faces

    def to_off(self) -> str:
        """OFF-format text dump (z = 0) for external viewers."""
        lines = ["OFF", f"{self.n_vertices} {self.n_faces} 0"]
        for x, y in self.vertices:
            lines.append(f"{x:.17g} {y:.17g} 0")
        for a, b, c in self.faces:
            lines.append(f"3 {a} {b} {c}")
        return "\n".join(lines) + "\n"


class _FaceGrid:
    """Uniform bucket grid over face bounding boxes for point location."""

    def __init__(self, vertices, faces, lo, cell, nx, ny):
        self.lo = lo
        self.cell = cell
        self.nx = nx
        self.ny = ny
        self.buckets = [[] for _ in range(nx * ny)]
        pts = vertices[faces]  # (F, 3, 2)
        bmin = np.floor((pts.min(axis=1) - lo) / cell).astype(int)
        bmax = np.floor((pts.max(axis=1) - lo) / cell).astype(int)
        bmin = np.clip(bmin, 0, [nx - 1, ny - 1])
        bmax = np.clip(bmax, 0, [nx - 1, ny - 1])
        for fi in range(len(faces)):
            for ix in range(bmin[fi, 0], bmax[fi, 0] + 1):
                for iy in range(bmin[fi, 1], bmax[fi, 1] + 1):
                    self.buckets[ix * ny + iy].append(fi)

    def candidates(self, p):
        ix = int((p[0] - self.lo[0]) / self.cell)
        iy = int((p[1] - self.lo[1]) / self.cell)
        if 0 <= ix < self.nx and 0 <= iy < self.ny:
            return self.buckets[ix * self.ny + iy]
        return ()


_SNAP_TOL = 1e-9


def _bary(vertices, faces, edge_basis_inv, fi, p):
    a = vertices[faces[fi, 0]]
    rhs = np.asarray(p, dtype=float) - a
    lam12 = edge_basis_inv[fi] @ rhs
    return np.array([1.0 - lam12[0] - lam12[1], lam12[0], lam12[1]])


def locate(mesh: TriMesh, p, hint: int | None = None):
    """Find the face containing p and its barycentric coordinates.

    Uses a walk from ``hint`` when given, otherwise the bucket grid with a
    brute-force scan as a last resort.  Points within 1e-9 of the mesh are
    snapped onto the nearest candidate face.

    Raises OutsideDomain when p is not inside (or within tolerance of) any
    face.
    """
    p = np.asarray(p, dtype=float)
    if hint is not None and 0 <= hint < mesh.n_faces:
        fi = _walk(mesh.vertices, mesh.faces, mesh.adjacency, p, hint)
        if fi >= 0:
            lam = _bary(mesh.vertices, mesh.faces, mesh.edge_basis_inv, fi, p)
            if lam.min() >= -_SNAP_TOL:
                return fi, _clamp_bary(lam)
    best_fi, best_lam, best_min = -1, None, -np.inf
    for fi in mesh._grid.candidates(p):
        lam = _bary(mesh.vertices, mesh.faces, mesh.edge_basis_inv, fi, p)
        m = lam.min()
        if m > best_min:
            best_fi, best_lam, best_min = fi, lam, m
        if m >= 0:
            return fi, lam
    if best_min >= -_SNAP_TOL:
        return best_fi, _clamp_bary(best_lam)
    # brute-force fallback (grid cell may be empty right at the boundary)
    for fi in range(mesh.n_faces):
        lam = _bary(mesh.vertices, mesh.faces, mesh.edge_basis_inv, fi, p)
        m = lam.min()
        if m > best_min:
            best_fi, best_lam, best_min = fi, lam, m
        if m >= 0:
            return fi, lam
    if best_min >= -_SNAP_TOL:
        return best_fi, _clamp_bary(best_lam)
    raise OutsideDomain(f"point {p.tolist()} is outside the meshed region")


def _clamp_bary(lam):
    lam = np.maximum(lam, 0.0)
    return lam / lam.sum()


def _walk(vertices, faces, adjacency, p, start, max_steps=10000):
    """Orientation walk toward p. Returns containing face or -1 on exit."""
    fi = start
    prev = -1
    for _ in range(max_steps):
        a, b, c = faces[fi]
        va, vb, vc = vertices[a], vertices[b], vertices[c]
        # cross products against each directed edge
        oa = (vc[0] - vb[0]) * (p[1] - vb[1]) - (vc[1] - vb[1]) * (p[0] - vb[0])
        ob = (va[0] - vc[0]) * (p[1] - vc[1]) - (va[1] - vc[1]) * (p[0] - vc[0])
        oc = (vb[0] - va[0]) * (p[1] - va[1]) - (vb[1] - va[1]) * (p[0] - va[0])
        worst, k = oa, 0
        if ob < worst:
            worst, k = ob, 1
        if oc < worst:
            worst, k = oc, 2
        if worst >= -1e-13:
            return fi
        nxt = adjacency[fi, k]
        if nxt < 0 or nxt == prev:
            return -1
        prev, fi = fi, nxt
    return -1


# ---------------------------------------------------------------------------
# fill_holes


def fill_holes(mesh: TriMesh) -> TriMesh:
    """Triangulate every hole loop so the mesh becomes a topological disk.

    New faces reuse existing loop vertices (indices are preserved) and are
    flagged in ``fill_faces``.  A mesh without holes is returned unchanged.
    """
    if len(mesh.boundary_loops) <= 1:
        return mesh
    new_faces = []
    for loop in mesh.boundary_loops[1:]:
        cycle = [int(i) for i in loop]
        if len(set(cycle)) != len(cycle):
            raise NonManifoldInput("hole loop revisits a vertex")
        poly = mesh.vertices[cycle]
        # fill faces must be CCW as seen by the mesh; orient the cycle CCW
        if signed_area(poly) < 0:
            cycle = cycle[::-1]
            poly = mesh.vertices[cycle]
        new_faces.extend(_ear_clip(poly, cycle))
    faces = np.vstack([mesh.faces, np.asarray(new_faces, dtype=np.int64)])
    fill = np.concatenate([mesh.fill_faces, np.ones(len(new_faces), dtype=bool)])
    return TriMesh(mesh.vertices, faces, (mesh.boundary_loops[0],), mesh.h_max, fill)


def remove_fill(mesh: TriMesh, original_loops: tuple) -> TriMesh:
    """Drop flagged fill faces, restoring the original multi-loop mesh."""
    keep = ~mesh.fill_faces
    return TriMesh(mesh.vertices, mesh.faces[keep], original_loops, mesh.h_max)


def _ear_clip(poly: np.ndarray, indices: list) -> list:
    """Triangulate a simple CCW polygon; returns global-index triples."""
    n = len(indices)
    if n < 3:
        raise NonManifoldInput("hole loop has fewer than 3 vertices")
    verts = list(range(n))
    pts = poly
    out = []
    guard = 0
    while len(verts) > 3:
        guard += 1
        if guard > 4 * n * n:
            raise NonManifoldInput("ear clipping failed; hole loop is not simple")
        clipped = False
        m = len(verts)
        for k in range(m):
            i0, i1, i2 = verts[(k - 1) % m], verts[k], verts[(k + 1) % m]
            a, b, c = pts[i0], pts[i1], pts[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= 1e-14 * max(1.0, np.abs(pts).max()) ** 2:
                continue
            ear = True
            for j in verts:
                if j in (i0, i1, i2):
                    continue
                if _in_triangle(a, b, c, pts[j]):
                    ear = False
                    break
            if ear:
                out.append((indices[i0], indices[i1], indices[i2]))
                verts.pop(k)
                clipped = True
                break
        if not clipped:
            raise NonManifoldInput("ear clipping stalled; degenerate hole loop")
    i0, i1, i2 = verts
    out.append((indices[i0], indices[i1], indices[i2]))
    return out


def _in_triangle(a, b, c, p) -> bool:
    d1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    d2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
    d3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
    return d1 >= 0 and d2 >= 0 and d3 >= 0


# ---------------------------------------------------------------------------
# PLMap


@dataclass(frozen=True)
class PLMap:
    """Piecewise-linear map defined by per-vertex image points.

    Forward evaluation interpolates barycentrically, the Jacobian is the
    exact per-face linear part, and inversion locates the query in the
    image triangles.
    """

    mesh: TriMesh
    image: np.ndarray
    orientation: np.ndarray = field(default=None)

    def __post_init__(self):
        img = np.ascontiguousarray(self.image, dtype=float)
        if img.shape != (self.mesh.n_vertices, 2):
            raise DegenerateInput("image array must be (n_vertices, 2)")
        img.setflags(write=False)
        object.__setattr__(self, "image", img)
        a, b, c = (img[self.mesh.faces[:, k]] for k in range(3))
        areas = 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                       - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
        object.__setattr__(self, "_image_areas", areas)
        object.__setattr__(self, "orientation", np.sign(areas).astype(np.int8))

    @property
    def all_positive(self) -> bool:
        return bool(np.all(self.orientation > 0))

    @cached_property
    def _image_basis(self) -> np.ndarray:
        a, b, c = (self.image[self.mesh.faces[:, k]] for k in range(3))
        m = np.empty((self.mesh.n_faces, 2, 2))
        m[:, :, 0] = b - a
        m[:, :, 1] = c - a
        return m

    @cached_property
    def _image_grid(self):
        cell = max(float(np.sqrt(np.abs(self._image_areas).mean()) * 2.0), 1e-9)
        lo = self.image.min(axis=0) - 1e-9
        hi = self.image.max(axis=0) + 1e-9
        nx = max(1, int(np.ceil((hi[0] - lo[0]) / cell)))
        ny = max(1, int(np.ceil((hi[1] - lo[1]) / cell)))
        return _FaceGrid(self.image, self.mesh.faces, lo, cell, nx, ny)

    @cached_property
    def _image_basis_inv(self) -> np.ndarray:
        m = self._image_basis
        det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        inv = np.empty_like(m)
        inv[:, 0, 0] = m[:, 1, 1]
        inv[:, 0, 1] = -m[:, 0, 1]
        inv[:, 1, 0] = -m[:, 1, 0]
        inv[:, 1, 1] = m[:, 0, 0]
        return inv / det[:, None, None]

    # -- forward ------------------------------------------------------------

    def eval(self, p, hint: int | None = None) -> np.ndarray:
        fi, lam = locate(self.mesh, p, hint)
        return lam @ self.image[self.mesh.faces[fi]]

    def eval_with_face(self, p, hint: int | None = None):
        fi, lam = locate(self.mesh, p, hint)
        return lam @ self.image[self.mesh.faces[fi]], fi

    def jacobian(self, p, hint: int | None = None) -> np.ndarray:
        fi, _ = locate(self.mesh, p, hint)
        return self.jacobian_at_face(fi)

    def jacobian_at_face(self, fi: int) -> np.ndarray:
        src_area = self.mesh.areas[fi]
        if abs(self._image_areas[fi]) < 1e-14 * src_area:
            raise SingularFace(f"image of face {fi} is degenerate")
        return self._image_basis[fi] @ self.mesh.edge_basis_inv[fi]

    # -- inverse ------------------------------------------------------------

    def eval_inverse(self, q, hint: int | None = None) -> np.ndarray:
        fi, lam = self.locate_image(q, hint)
        return lam @ self.mesh.vertices[self.mesh.faces[fi]]

    def locate_image(self, q, hint: int | None = None):
        """Locate q among the image triangles (requires positive orientation
        on the faces involved)."""
        q = np.asarray(q, dtype=float)
        if hint is not None and 0 <= hint < self.mesh.n_faces:
            fi = _walk(self.image, self.mesh.faces, self.mesh.adjacency, q, hint)
            if fi >= 0:
                lam = _bary(self.image, self.mesh.faces, self._image_basis_inv, fi, q)
                if lam.min() >= -_SNAP_TOL:
                    return self._check_face(fi), _clamp_bary(lam)
        best_fi, best_lam, best_min = -1, None, -np.inf
        for fi in self._image_grid.candidates(q):
            lam = _bary(self.image, self.mesh.faces, self._image_basis_inv, fi, q)
            m = lam.min()
            if m > best_min:
                best_fi, best_lam, best_min = fi, lam, m
            if m >= 0:
                return self._check_face(fi), lam
        if best_min >= -_SNAP_TOL:
            return self._check_face(best_fi), _clamp_bary(best_lam)
        for fi in range(self.mesh.n_faces):
            lam = _bary(self.image, self.mesh.faces, self._image_basis_inv, fi, q)
            m = lam.min()
            if m > best_min:
                best_fi, best_lam, best_min = fi, lam, m
            if m >= 0:
                return self._check_face(fi), lam
        if best_min >= -_SNAP_TOL:
            return self._check_face(best_fi), _clamp_bary(best_lam)
        raise OutsideDomain(f"point {q.tolist()} is outside the image region")

    def _check_face(self, fi: int) -> int:
        if abs(self._image_areas[fi]) < 1e-14 * self.mesh.areas[fi]:
            raise SingularFace(f"image of face {fi} is degenerate")
        return fi

    @staticmethod
    def identity(mesh: TriMesh) -> "PLMap":
        return PLMap(mesh, mesh.vertices.copy())
