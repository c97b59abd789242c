"""Full quasi-conformal mapping from a polygonal world to the ball world.

Pipeline: fill holes, disk harmonic map (cotangent Laplacian, one sparse
solve), Beltrami coefficient of the harmonic map, hole circularization,
then a Linear Beltrami Solver pass (one more sparse solve) with all
boundary loops pinned to circles.  Exactly two sparse factorizations per
epoch; moving the target circles afterwards only changes right-hand
sides, so per-tick updates reuse the cached factorization.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import sparsesolve
from .errors import (
    BeltramiOutOfRange,
    DegenerateTriangle,
    NonManifoldInput,
    OverlappingTargets,
)
from .geometry import (
    PLMap,
    PolyWorld,
    TriMesh,
    fill_holes,
    polygon_centroid,
    signed_area,
)
from .meshing import triangulate

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# ball world


class BallWorld:
    """Disk workspace (center q0, radius rho0) with M circular obstacles.

    Obstacle centers ``q`` (M, 2) and radii ``rho`` (M,) are the controlled
    state; ``q_init`` / ``rho_init`` hold the values at construction, which
    the nominal obstacle controller homes toward.
    """

    def __init__(self, q0, rho0, q, rho, q_init=None, rho_init=None):
        self.q0 = np.asarray(q0, dtype=float)
        self.rho0 = float(rho0)
        self.q = np.asarray(q, dtype=float).reshape(-1, 2).copy()
        self.rho = np.asarray(rho, dtype=float).reshape(-1).copy()
        self.q_init = self.q.copy() if q_init is None else np.asarray(q_init, float).copy()
        self.rho_init = self.rho.copy() if rho_init is None else np.asarray(rho_init, float).copy()
        self.validate()

    @property
    def m(self) -> int:
        return len(self.rho)

    def validate(self, tol: float = 1e-9):
        if self.rho0 <= 0:
            raise OverlappingTargets("enclosing ball radius must be positive")
        if np.any(self.rho <= 0):
            raise OverlappingTargets("obstacle radii must be positive")
        d0 = np.hypot(*(self.q - self.q0).T) + self.rho
        if np.any(d0 > self.rho0 + tol):
            j = int(np.argmax(d0))
            raise OverlappingTargets(f"obstacle {j} leaves the enclosing ball")
        for j in range(self.m):
            for k in range(j + 1, self.m):
                gap = np.hypot(*(self.q[j] - self.q[k])) - (self.rho[j] + self.rho[k])
                if gap < -tol:
                    raise OverlappingTargets(f"obstacles {j} and {k} overlap")

    def copy(self) -> "BallWorld":
        return BallWorld(self.q0, self.rho0, self.q, self.rho, self.q_init, self.rho_init)


# ---------------------------------------------------------------------------
# cotangent Laplacian


def cotangent_laplacian(mesh: TriMesh) -> sp.csr_matrix:
    """Cotangent-weight stiffness matrix: off-diagonal of edge (i, j) is
    -(cot a + cot b) / 2 over the two opposite angles, rows sum to zero."""
    areas = mesh.areas
    if np.any(areas < 1e-14):
        bad = int(np.argmin(areas))
        raise DegenerateTriangle(f"face {bad} has area {areas[bad]:.3e}")
    v = mesh.vertices
    f = mesh.faces
    rows, cols, vals = [], [], []
    for k in range(3):
        i = f[:, (k + 1) % 3]
        j = f[:, (k + 2) % 3]
        o = f[:, k]
        e1 = v[i] - v[o]
        e2 = v[j] - v[o]
        cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        dot = np.einsum("ij,ij->i", e1, e2)
        cot = dot / cross  # cross = 2 * area > 0 for CCW faces
        w = 0.5 * cot
        rows.extend([i, j, i, j])
        cols.extend([j, i, i, j])
        vals.extend([-w, -w, w, w])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    n = mesh.n_vertices
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _loop_ccw(mesh: TriMesh, loop: np.ndarray) -> np.ndarray:
    pts = mesh.vertices[loop]
    if signed_area(pts) < 0:
        return np.concatenate([[loop[0]], loop[1:][::-1]])
    return loop


def disk_harmonic_map(mesh: TriMesh) -> PLMap:
    """Harmonic map of a disk-topology mesh onto the unit disk.

    The outer loop is pinned to the unit circle at arc-length-proportional
    angles; interior vertices solve the cotangent Laplace equation (one
    sparse factorization, two right-hand sides).
    """
    if len(mesh.boundary_loops) != 1:
        raise NonManifoldInput("disk harmonic map needs a single boundary loop")
    loop = _loop_ccw(mesh, mesh.boundary_loops[0])
    pts = mesh.vertices[loop]
    seg = np.hypot(*(np.roll(pts, -1, axis=0) - pts).T)
    s = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    theta = 2.0 * np.pi * s / seg.sum()
    bc = {int(vi): (np.cos(t), np.sin(t)) for vi, t in zip(loop, theta)}
    image = _solve_dirichlet(cotangent_laplacian(mesh), mesh.n_vertices, bc)
    return PLMap(mesh, image)


def _solve_dirichlet(L: sp.csr_matrix, n: int, bc: dict) -> np.ndarray:
    fixed = np.fromiter(bc.keys(), dtype=np.int64)
    vals = np.asarray([bc[int(i)] for i in fixed], dtype=float)
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.nonzero(mask)[0]
    out = np.zeros((n, 2))
    out[fixed] = vals
    if len(free):
        lcsc = L.tocsc()
        lff = lcsc[free][:, free]
        lfb = lcsc[free][:, fixed]
        rhs = -lfb @ vals
        out[free] = sparsesolve.factorize(lff).solve(rhs)
    return out


def harmonic_residual(L: sp.csr_matrix, image: np.ndarray, boundary: np.ndarray) -> float:
    """Max-norm residual of L @ image on non-boundary rows."""
    r = L @ image
    mask = np.ones(image.shape[0], dtype=bool)
    mask[boundary] = False
    if not mask.any():
        return 0.0
    return float(np.abs(r[mask]).max())


# ---------------------------------------------------------------------------
# Beltrami coefficient


@dataclass(frozen=True)
class BeltramiField:
    """Per-face complex Beltrami coefficient of a piecewise-linear map."""

    mesh: TriMesh
    mu: np.ndarray

    @property
    def violations(self) -> np.ndarray:
        """Faces where |mu| >= 1 (reported, never silently clamped)."""
        return np.nonzero(np.abs(self.mu) >= 1.0)[0]

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.mu).max()) if len(self.mu) else 0.0


def _wirtinger_matrices(mesh: TriMesh):
    """Sparse per-face d/dz and d/dzbar operators on vertex functions."""
    v = mesh.vertices
    f = mesh.faces
    areas = mesh.areas
    if np.any(areas < 1e-14):
        raise DegenerateTriangle("mesh contains a degenerate face")
    nf = mesh.n_faces
    rows = np.repeat(np.arange(nf), 3)
    cols = f.ravel()
    gx = np.empty((nf, 3))
    gy = np.empty((nf, 3))
    for k in range(3):
        # gradient of the hat function at local vertex k: rot90(opposite
        # edge) / (2 area), with rot90(d) = (-dy, dx)
        e = v[f[:, (k + 2) % 3]] - v[f[:, (k + 1) % 3]]
        gx[:, k] = -e[:, 1] / (2.0 * areas)
        gy[:, k] = e[:, 0] / (2.0 * areas)
    dx = sp.csr_matrix((gx.ravel(), (rows, cols)), shape=(nf, mesh.n_vertices))
    dy = sp.csr_matrix((gy.ravel(), (rows, cols)), shape=(nf, mesh.n_vertices))
    return dx, dy


def beltrami_coefficient(plmap: PLMap) -> BeltramiField:
    """mu = f_zbar / f_z per face, from the face's exact affine map."""
    dx, dy = _wirtinger_matrices(plmap.mesh)
    fz_vals = plmap.image[:, 0] + 1j * plmap.image[:, 1]
    fx = dx @ fz_vals
    fy = dy @ fz_vals
    f_z = 0.5 * (fx - 1j * fy)
    f_zbar = 0.5 * (fx + 1j * fy)
    denom = np.where(np.abs(f_z) < 1e-300, 1e-300, f_z)
    return BeltramiField(plmap.mesh, f_zbar / denom)


# ---------------------------------------------------------------------------
# hole circularization


def circularize_holes(mesh: TriMesh, harmonic: PLMap, targets=None) -> list:
    """Target circle (center, radius) per hole.

    Default: center at the centroid of the hole's harmonic image, radius
    preserving the image area.  Explicit ``targets`` are used verbatim.
    Raises OverlappingTargets when the circles collide or leave the disk.
    """
    n_holes = len(mesh.boundary_loops) - 1
    if targets is not None:
        circles = [(np.asarray(c, dtype=float), float(r)) for c, r in targets]
        if len(circles) != n_holes:
            raise OverlappingTargets("one target circle required per hole")
    else:
        circles = []
        for loop in mesh.boundary_loops[1:]:
            poly = harmonic.image[loop]
            area = abs(signed_area(poly))
            circles.append((polygon_centroid(poly), float(np.sqrt(area / np.pi))))
    for j, (c, r) in enumerate(circles):
        if np.hypot(*c) + r > 1.0 + 1e-9:
            raise OverlappingTargets(f"target circle {j} leaves the unit disk")
        for k in range(j + 1, len(circles)):
            ck, rk = circles[k]
            if np.hypot(*(c - ck)) < r + rk - 1e-9:
                raise OverlappingTargets(f"target circles {j} and {k} overlap")
    return circles


# ---------------------------------------------------------------------------
# Linear Beltrami Solver


def lbs_coefficients(mu: np.ndarray):
    """Diffusion-matrix entries (a11, a12, a22) of the generalized Laplace
    equation for a prescribed Beltrami coefficient."""
    re = mu.real
    im = mu.imag
    denom = 1.0 - (re * re + im * im)
    a11 = ((re - 1.0) ** 2 + im * im) / denom
    a12 = -2.0 * im / denom
    a22 = ((re + 1.0) ** 2 + im * im) / denom
    return a11, a12, a22


def generalized_laplacian(mesh: TriMesh, mu: np.ndarray) -> sp.csr_matrix:
    """FEM stiffness of div(A grad u) with the per-face A built from mu.
    Reduces to the cotangent Laplacian at mu = 0."""
    if np.any(np.abs(mu) >= 1.0 - 1e-9):
        bad = int(np.argmax(np.abs(mu)))
        raise BeltramiOutOfRange(f"|mu| = {abs(mu[bad]):.6f} on face {bad}")
    a11, a12, a22 = lbs_coefficients(mu)
    v = mesh.vertices
    f = mesh.faces
    areas = mesh.areas
    g = np.empty((mesh.n_faces, 3, 2))
    for k in range(3):
        e = v[f[:, (k + 2) % 3]] - v[f[:, (k + 1) % 3]]
        g[:, k, 0] = -e[:, 1] / (2.0 * areas)
        g[:, k, 1] = e[:, 0] / (2.0 * areas)
    rows, cols, vals = [], [], []
    for i in range(3):
        agx = a11 * g[:, i, 0] + a12 * g[:, i, 1]
        agy = a12 * g[:, i, 0] + a22 * g[:, i, 1]
        for j in range(3):
            kij = areas * (agx * g[:, j, 0] + agy * g[:, j, 1])
            rows.append(f[:, i])
            cols.append(f[:, j])
            vals.append(kij)
    n = mesh.n_vertices
    return sp.csr_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def lbs_solve(mesh: TriMesh, mu: BeltramiField, boundary_positions: dict) -> PLMap:
    """Quasi-conformal map with prescribed mu and Dirichlet boundary.

    ``boundary_positions`` maps vertex index -> target point; every
    boundary-loop vertex must be constrained.  One sparse factorization.
    """
    for loop in mesh.boundary_loops:
        for vi in loop:
            if int(vi) not in boundary_positions:
                raise NonManifoldInput(f"boundary vertex {vi} is unconstrained")
    K = generalized_laplacian(mesh, mu.mu)
    image = _solve_dirichlet(K, mesh.n_vertices, boundary_positions)
    return PLMap(mesh, image)


# ---------------------------------------------------------------------------
# epoch: the two-solve pipeline plus cheap per-tick updates


@dataclass
class FullQCEpoch:
    """Frozen stages of one full-QC epoch.

    The harmonic map, Beltrami coefficient, and the LBS factorization are
    computed once (two sparse factorizations total); moving the obstacle
    circles only changes boundary values, so :meth:`resolve` is a pair of
    triangular backsolves.
    """

    world: PolyWorld
    mesh: TriMesh
    filled: TriMesh
    harmonic: PLMap
    mu: BeltramiField
    ball: BallWorld
    _outer_bc: dict = field(repr=False, default=None)
    _hole_angles: list = field(repr=False, default=None)
    _free: np.ndarray = field(repr=False, default=None)
    _fixed: np.ndarray = field(repr=False, default=None)
    _factor: object = field(repr=False, default=None)
    _k_fb: sp.csr_matrix = field(repr=False, default=None)
    plmap: PLMap = None

    @staticmethod
    def build(world: PolyWorld, h_max: float, targets=None,
              min_angle_deg: float = 20.0, mesh: TriMesh | None = None) -> "FullQCEpoch":
        if mesh is None:
            mesh = triangulate(world, h_max, min_angle_deg)
        filled = fill_holes(mesh)
        harmonic = disk_harmonic_map(filled)
        n_orig = mesh.n_faces
        mu_all = beltrami_coefficient(harmonic)
        mu = BeltramiField(mesh, mu_all.mu[:n_orig])
        if len(mu_all.violations):
            fill_viol = [int(i) for i in mu_all.violations if i >= n_orig]
            real_viol = [int(i) for i in mu_all.violations if i < n_orig]
            if fill_viol:
                log.info("harmonic map folds on %d fill faces (discarded)", len(fill_viol))
            if real_viol:
                log.warning("harmonic map folds on faces %s", real_viol[:20])
        circles = circularize_holes(mesh, harmonic, targets)
        outer_loop = _loop_ccw(mesh, mesh.boundary_loops[0])
        outer_bc = {int(vi): tuple(harmonic.image[vi]) for vi in outer_loop}
        hole_angles = []
        for loop, (c, _r) in zip(mesh.boundary_loops[1:], circles):
            d = harmonic.image[loop] - c
            hole_angles.append((loop, np.arctan2(d[:, 1], d[:, 0])))

        K = generalized_laplacian(mesh, mu.mu)
        fixed = np.concatenate([np.asarray(sorted(outer_bc), dtype=np.int64)]
                               + [np.asarray(l, dtype=np.int64) for l, _ in hole_angles])
        fixed = np.unique(fixed)
        mask = np.ones(mesh.n_vertices, dtype=bool)
        mask[fixed] = False
        free = np.nonzero(mask)[0]
        kcsc = K.tocsc()
        factor = sparsesolve.factorize(kcsc[free][:, free]) if len(free) else None
        k_fb = kcsc[free][:, fixed]

        ball = BallWorld(np.zeros(2), 1.0,
                         np.array([c for c, _ in circles]).reshape(-1, 2),
                         np.array([r for _, r in circles]))
        epoch = FullQCEpoch(world, mesh, filled, harmonic, mu, ball,
                            outer_bc, hole_angles, free, fixed, factor, k_fb)
        epoch.plmap = epoch.resolve(ball)
        return epoch

    def resolve(self, ball: BallWorld) -> PLMap:
        """Recompute the map for the current obstacle circles (backsolve
        only; no new factorization)."""
        n = self.mesh.n_vertices
        vals = np.zeros((n, 2))
        for vi, p in self._outer_bc.items():
            vals[vi] = p
        for j, (loop, ang) in enumerate(self._hole_angles):
            vals[loop, 0] = ball.q[j, 0] + ball.rho[j] * np.cos(ang)
            vals[loop, 1] = ball.q[j, 1] + ball.rho[j] * np.sin(ang)
        if self._factor is not None and len(self._free):
            rhs = -self._k_fb @ vals[self._fixed]
            vals[self._free] = self._factor.solve(rhs)
        plmap = PLMap(self.mesh, vals)
        flips = int(np.sum(plmap.orientation <= 0))
        if flips:
            frac = flips / self.mesh.n_faces
            if frac > 1e-3:
                log.warning("map has %d flipped faces (%.2f%%)", flips, 100 * frac)
        self.plmap = plmap
        return plmap

    def diagnostics(self) -> dict:
        out_mu = beltrami_coefficient(self.plmap)
        return {
            "n_vertices": self.mesh.n_vertices,
            "n_faces": self.mesh.n_faces,
            "max_abs_mu_input": self.mu.max_abs,
            "max_abs_mu_output": out_mu.max_abs,
            "mu_violations": [int(i) for i in out_mu.violations],
            "orientation_flips": [int(i) for i in np.nonzero(self.plmap.orientation <= 0)[0]],
        }

    def dump_diagnostics(self, path):
        doc = self.diagnostics()
        doc["mu_re"] = [float(x) for x in self.mu.mu.real]
        doc["mu_im"] = [float(x) for x in self.mu.mu.imag]
        with open(path, "w") as fh:
            json.dump(doc, fh)


def full_qc_map(world: PolyWorld, h_max: float, targets=None,
                min_angle_deg: float = 20.0):
    """Map the polygonal world onto the unit disk with circular holes.

    Returns ``(PLMap, BallWorld)``.  Exactly two sparse factorizations.
    """
    epoch = FullQCEpoch.build(world, h_max, targets, min_angle_deg)
    return epoch.plmap, epoch.ball
