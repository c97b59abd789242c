"""Per-obstacle analytic conformal maps and the blended partial mapping.

Each polygonal obstacle gets a closed-form chain that maps its boundary
onto the unit circle and fixes infinity: an opening square root, a run of
geodesic slit closures (two-step similarity + square root per boundary
vertex), a half-plane normalization, the Cayley transform, and a final
disk automorphism anchoring the image of infinity back at infinity.  No
equation solving anywhere.

The blended map combines the per-obstacle diffeomorphisms with rational
switch functions weighted by a locality parameter lambda; it is exact on
every obstacle boundary and approaches the identity-plus-offset far field
as lambda grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import chain_eval
from .errors import (
    BranchFailure,
    CenterSingularity,
    DegeneratePolygon,
    NegativeBeta,
    NoConvergence,
    ProbeInstability,
)
from .geometry import (
    PolyWorld,
    interior_point,
    polygon_centroid,
    polygon_is_simple,
    signed_area,
)
from .qc_full import BallWorld

_PROBE_ANGLE = math.pi / 7.0


def _interior_reference(poly: np.ndarray) -> complex:
    x, y = interior_point(poly)
    return complex(x, y)


@dataclass(frozen=True)
class AnalyticMapChain:
    """Closed-form conformal map of one polygon onto the unit disk.

    ``stages`` is the kernel encoding of the composition; ``xi`` caches the
    intermediate vertex images that parameterize the geodesic stages;
    ``square_sign`` records the branch chosen for the half-plane
    normalization; ``vertex_images`` are the tracked final images of the
    polygon vertices (unit modulus).
    """

    vertices: np.ndarray
    stages: np.ndarray
    xi: np.ndarray
    square_sign: float
    anchor: complex
    vertex_images: np.ndarray

    @property
    def diameter(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def eval(self, pts) -> np.ndarray:
        """Map points (complex array or (n, 2)) through the chain.

        Points coinciding with a polygon vertex take the tracked image
        (the deterministic branch at those branch points)."""
        z = _as_complex(pts)
        out = chain_eval.eval_chain(self.stages, z)
        vz = self.vertices[:, 0] + 1j * self.vertices[:, 1]
        tol = 1e-12 * max(self.diameter, 1.0)
        flat = np.atleast_1d(out)
        zf = np.atleast_1d(z)
        for k, v in enumerate(vz):
            hit = np.abs(zf - v) <= tol
            if hit.any():
                flat[hit] = self.vertex_images[k]
        return out if out.shape == flat.shape else flat

    def beta(self, pts) -> np.ndarray:
        """Obstacle clearance function |Psi|^2 - 1: zero on the boundary,
        positive outside, negative inside."""
        w = self.eval(pts)
        return np.abs(w) ** 2 - 1.0


def _as_complex(pts) -> np.ndarray:
    a = np.asarray(pts)
    if a.dtype == complex:
        return a
    a = np.asarray(a, dtype=float)
    if a.ndim >= 1 and a.shape[-1] == 2:
        return a[..., 0] + 1j * a[..., 1]
    return a.astype(complex)


def _apply_stage_tracked(row, vals, is_inf):
    """Apply one stage to tracked vertex values, keeping infinity exact."""
    op = int(row[0])
    out = np.empty_like(vals)
    new_inf = np.zeros_like(is_inf)
    if op == 1:
        beta, h = row[1], row[2]
        for k in range(len(vals)):
            if is_inf[k]:
                if beta != 0.0:
                    w1 = -1j / beta
                    out[k] = w1 * np.sqrt(1.0 - (h / w1) ** 2)
                else:
                    new_inf[k] = True
                    out[k] = np.inf
                continue
            out[k] = chain_eval.eval_chain(np.asarray([row]), np.asarray([vals[k]]))[0]
    elif op == 2:
        s = row[3]
        cinf = row[4] == 1.0
        C = complex(row[1], row[2])
        for k in range(len(vals)):
            if is_inf[k]:
                if cinf:
                    new_inf[k] = True
                    out[k] = np.inf
                else:
                    out[k] = s * C * C  # Moebius sends infinity to -C
                continue
            if not cinf and abs(vals[k] - C) <= 1e-300:
                new_inf[k] = True
                out[k] = np.inf
                continue
            out[k] = chain_eval.eval_chain(np.asarray([row]), np.asarray([vals[k]]))[0]
    else:
        for k in range(len(vals)):
            if is_inf[k]:
                if op == 3:
                    out[k] = 1.0  # Cayley sends infinity to 1
                elif op == 4:
                    a0 = complex(row[1], row[2])
                    out[k] = -1.0 / np.conj(a0) if abs(a0) > 0 else np.inf
                    new_inf[k] = abs(a0) == 0
                else:
                    new_inf[k] = True
                    out[k] = np.inf
                continue
            out[k] = chain_eval.eval_chain(np.asarray([row]), np.asarray([vals[k]]))[0]
    return out, new_inf


def geodesic_map(vertices: np.ndarray) -> AnalyticMapChain:
    """Build the analytic chain for a simple anticlockwise polygon.

    Fully closed-form: the construction performs no linear solves.  Raises
    BranchFailure (with the stage index) if an intermediate vertex image
    lands on a branch cut, ProbeInstability if the image of infinity does
    not stabilize between probe radii 1e7 and 1e8.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
        raise DegeneratePolygon("polygon needs at least 3 vertices")
    if abs(signed_area(verts)) < 1e-14:
        raise DegeneratePolygon("polygon has zero area")
    if signed_area(verts) < 0:
        raise DegeneratePolygon("polygon must be anticlockwise")
    if not polygon_is_simple(verts):
        raise DegeneratePolygon("polygon is self-intersecting")
    n = len(verts)
    vz = verts[:, 0] + 1j * verts[:, 1]
    p1, p2 = vz[0], vz[1]

    stages = [np.array([0.0, p1.real, p1.imag, p2.real, p2.imag, ])]
    vals = np.sqrt((vz - p2) / np.where(vz == p1, 1.0, vz - p1))
    is_inf = vz == p1
    vals[is_inf] = np.inf
    vals[1] = 0.0
    ref = _interior_reference(verts)

    xi_cache = []
    for j in range(1, n - 1):
        xi = vals[j + 1]
        xi_cache.append(xi)
        if not np.isfinite(xi) or xi.real <= 1e-12 * abs(xi):
            raise BranchFailure(
                f"vertex image {xi} on a branch cut at geodesic stage {j}", stage=j)
        beta = xi.imag / abs(xi) ** 2
        h = abs(xi) ** 2 / xi.real
        row = np.array([1.0, beta, h, 0.0, 0.0])
        stages.append(row)
        vals, is_inf = _apply_stage_tracked(row, vals, is_inf)
        vals[j + 1] = 0.0

    # half-plane normalization: Moebius sending the image of p1 to
    # infinity, then a square; the sign puts the polygon interior in the
    # upper half plane (checked on an interior reference point)
    C = vals[0]
    c_inf = bool(is_inf[0])
    partial = np.asarray(stages)
    ref_img = chain_eval.eval_chain(partial, np.asarray([ref]))[0]
    m_ref = ref_img if c_inf else ref_img / (1.0 - ref_img / C)
    sign = 1.0 if (m_ref * m_ref).imag > 0 else -1.0
    row = np.array([2.0, 0.0 if c_inf else C.real, 0.0 if c_inf else C.imag,
                    sign, 1.0 if c_inf else 0.0])
    stages.append(row)
    vals, is_inf = _apply_stage_tracked(row, vals, is_inf)

    row = np.array([3.0, 0.0, 0.0, 0.0, 0.0])
    stages.append(row)
    vals, is_inf = _apply_stage_tracked(row, vals, is_inf)

    anchor, row = mobius_fix_infinity(np.asarray(stages))
    stages.append(row)
    vals, is_inf = _apply_stage_tracked(row, vals, is_inf)
    if np.any(is_inf):
        raise BranchFailure("a polygon vertex maps to infinity", stage=n)

    return AnalyticMapChain(verts, np.asarray(stages), np.asarray(xi_cache),
                            sign, anchor, vals)


def recenter(chain: AnalyticMapChain, anchor) -> AnalyticMapChain:
    """Compose a disk automorphism sending the image of ``anchor`` to 0.

    Used for the workspace chain, where the interior (not infinity) is the
    relevant side: without it the disk map may crowd the whole interior
    against the circle and starve the blend's workspace switch."""
    b = chain.eval(np.asarray([complex(anchor[0], anchor[1])]))[0]
    if abs(b) >= 1.0:
        raise DegeneratePolygon("recenter anchor does not map inside the disk")
    row = np.array([4.0, b.real, b.imag, 0.0, 0.0])
    vals, is_inf = _apply_stage_tracked(row, chain.vertex_images.copy(),
                                        np.zeros(len(chain.vertex_images), bool))
    return AnalyticMapChain(chain.vertices,
                            np.vstack([chain.stages, row[None, :]]),
                            chain.xi, chain.square_sign, complex(b), vals)


def mobius_fix_infinity(stages: np.ndarray):
    """Disk automorphism re-anchoring the chain's image of infinity at
    infinity (reflection, Moebius shift, inverse reflection collapse to a
    single Moebius).  Probes the chain at |z| = 1e7 and 1e8."""
    probes = np.asarray([1e7 * np.exp(1j * _PROBE_ANGLE),
                         1e8 * np.exp(1j * _PROBE_ANGLE)])
    w = chain_eval.eval_chain(stages, probes)

    def reflect(v):
        if not np.isfinite(v) or abs(v) > 1e140:
            return 0.0 + 0.0j
        if abs(v) < 1e-140:
            raise ProbeInstability("image of infinity fell on the unit circle center")
        return 1.0 / np.conj(v)

    a7, a8 = reflect(w[0]), reflect(w[1])
    if abs(a7 - a8) > 1e-6:
        raise ProbeInstability(
            f"image of infinity unstable between probes: {a7} vs {a8}")
    if abs(a8) >= 1.0:
        raise ProbeInstability("image of infinity is not outside the unit disk")
    return a8, np.array([4.0, a8.real, a8.imag, 0.0, 0.0])


# ---------------------------------------------------------------------------
# obstacle diffeomorphisms for the blended map


@dataclass(frozen=True)
class PolygonObstacle:
    """Polygonal obstacle with its analytic chain and ball-world target."""

    chain: AnalyticMapChain
    q: np.ndarray
    rho: float

    def phi(self, x) -> np.ndarray:
        w = self.chain.eval(np.asarray([complex(x[0], x[1])]))[0]
        return self.q + self.rho * np.array([w.real, w.imag])

    def beta(self, x) -> float:
        return float(self.chain.beta(np.asarray([complex(x[0], x[1])]))[0])


@dataclass(frozen=True)
class StarObstacle:
    """Star-shaped obstacle: positive radial function about a center."""

    center: np.ndarray
    radial: object  # callable theta -> radius, 2*pi periodic
    q: np.ndarray
    rho: float

    def phi(self, x) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.center
        r = np.hypot(*d)
        if r < 1e-300:
            raise CenterSingularity("cannot evaluate the star map at its center")
        theta = math.atan2(d[1], d[0])
        return self.q + self.rho * (r / float(self.radial(theta))) * np.array(
            [math.cos(theta), math.sin(theta)])

    def beta(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.center
        r = np.hypot(*d)
        if r < 1e-300:
            return -1.0
        theta = math.atan2(d[1], d[0])
        return float((r / float(self.radial(theta))) ** 2 - 1.0)


def star_diffeo(obstacle: StarObstacle, x) -> np.ndarray:
    """Map x through the star-obstacle diffeomorphism rho*b(x) + q."""
    return obstacle.phi(x)


@dataclass(frozen=True)
class WorkspaceMap:
    """Outer boundary treated as obstacle 0: free space is the inside."""

    chain: AnalyticMapChain
    q: np.ndarray
    rho: float

    def phi(self, x) -> np.ndarray:
        w = self.chain.eval(np.asarray([complex(x[0], x[1])]))[0]
        return self.q + self.rho * np.array([w.real, w.imag])

    def beta(self, x) -> float:
        w = self.chain.eval(np.asarray([complex(x[0], x[1])]))[0]
        return float(1.0 - abs(w) ** 2)


@dataclass(frozen=True)
class BlendParams:
    lam: float
    x_g: np.ndarray
    q_g: np.ndarray

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        object.__setattr__(self, "x_g", np.asarray(self.x_g, dtype=float))
        object.__setattr__(self, "q_g", np.asarray(self.q_g, dtype=float))


def blend(maps, params: BlendParams, x) -> np.ndarray:
    """Blended diffeomorphism: switch-weighted sum of the per-obstacle maps
    plus the identity-shift goal term.

    ``maps`` lists the workspace map first, then one entry per obstacle.
    The switches form a partition of unity; on an obstacle boundary the
    output equals that obstacle's map exactly; x_g maps to q_g exactly.
    """
    x = np.asarray(x, dtype=float)
    betas = np.array([m.beta(x) for m in maps])
    if np.any(betas < -1e-12):
        bad = int(np.argmin(betas))
        raise NegativeBeta(f"point {x.tolist()} is inside obstacle region {bad}")
    betas = np.maximum(betas, 0.0)
    gamma_g = float(np.sum((x - params.x_g) ** 2))
    n = len(maps)
    sigma = np.empty(n)
    for i in range(n):
        bar = 1.0
        for j in range(n):
            if j != i:
                bar *= betas[j]
        num = gamma_g * bar
        den = num + params.lam * betas[i]
        sigma[i] = num / den if den > 0 else (1.0 if betas[i] == 0.0 else 0.0)
    sigma_g = 1.0 - sigma.sum()
    out = sigma_g * ((x - params.x_g) + params.q_g)
    for i in range(n):
        if sigma[i] != 0.0:
            out = out + sigma[i] * maps[i].phi(x)
    return out


def blend_switches(maps, params: BlendParams, x):
    """(sigma_0..sigma_M, sigma_g) at x, for diagnostics and tests."""
    x = np.asarray(x, dtype=float)
    betas = np.maximum(np.array([m.beta(x) for m in maps]), 0.0)
    gamma_g = float(np.sum((x - params.x_g) ** 2))
    n = len(maps)
    sigma = np.empty(n)
    for i in range(n):
        bar = np.prod(np.delete(betas, i))
        num = gamma_g * bar
        den = num + params.lam * betas[i]
        sigma[i] = num / den if den > 0 else (1.0 if betas[i] == 0.0 else 0.0)
    return sigma, 1.0 - sigma.sum()


# ---------------------------------------------------------------------------
# the sim-facing partial map


class PartialMap:
    """Blended partial mapping between the real world and the ball world.

    Obstacle chains are built once per obstacle (closed form, no solves);
    ball-world circles are the controlled state.  The inverse is a damped
    Newton iteration on the forward map.
    """

    def __init__(self, world: PolyWorld, lam: float, x_g, q_g=None,
                 densify: int = 0):
        self.world = world
        self.lam = float(lam)
        self.x_g = np.asarray(x_g, dtype=float)
        self.q_g = self.x_g.copy() if q_g is None else np.asarray(q_g, dtype=float)
        self.densify = int(densify)
        shift = self.q_g - self.x_g
        outer_ccw = world.outer if signed_area(world.outer) > 0 else world.outer[::-1]
        self._ws_chain = recenter(geodesic_map(_densified(outer_ccw, self.densify)),
                                  interior_point(world.outer))
        centroid = polygon_centroid(world.outer)
        q0 = centroid + shift
        # circumradius about the centroid: the identity far field then stays
        # inside the enclosing ball everywhere in the workspace
        rho0 = float(np.hypot(*(world.outer - centroid).T).max())
        self.obstacles = []
        q, rho = [], []
        for hole in world.holes:
            ccw = hole[::-1] if signed_area(hole) < 0 else hole
            chain = geodesic_map(_densified(ccw, self.densify))
            c = polygon_centroid(hole) + shift
            r = math.sqrt(abs(signed_area(hole)) / math.pi)
            self.obstacles.append(chain)
            q.append(c)
            rho.append(r)
        self.ball = BallWorld(q0, rho0, np.asarray(q).reshape(-1, 2), np.asarray(rho))

    # -- construction of the per-evaluation map objects ---------------------

    def _maps(self, ball: BallWorld):
        ms = [WorkspaceMap(self._ws_chain, ball.q0, ball.rho0)]
        for j, chain in enumerate(self.obstacles):
            ms.append(PolygonObstacle(chain, ball.q[j], ball.rho[j]))
        return ms

    def params(self) -> BlendParams:
        return BlendParams(self.lam, self.x_g, self.q_g)

    def eval(self, x, ball: BallWorld | None = None) -> np.ndarray:
        ball = self.ball if ball is None else ball
        return blend(self._maps(ball), self.params(), x)

    def add_obstacle(self, polygon: np.ndarray) -> "PartialMap":
        """New map with one more obstacle chain (world gains a hole)."""
        new = object.__new__(PartialMap)
        new.world = self.world.add_hole(polygon)
        new.lam = self.lam
        new.x_g = self.x_g
        new.q_g = self.q_g
        new.densify = self.densify
        new._ws_chain = self._ws_chain
        hole = new.world.holes[-1]
        ccw = hole[::-1] if signed_area(hole) < 0 else hole
        chain = geodesic_map(_densified(ccw, self.densify))
        new.obstacles = self.obstacles + [chain]
        c = polygon_centroid(hole) + (self.q_g - self.x_g)
        r = math.sqrt(abs(signed_area(hole)) / math.pi)
        new.ball = BallWorld(self.ball.q0, self.ball.rho0,
                             np.vstack([self.ball.q, c[None, :]]),
                             np.concatenate([self.ball.rho, [r]]),
                             np.vstack([self.ball.q_init, c[None, :]]),
                             np.concatenate([self.ball.rho_init, [r]]))
        return new

    def inverse(self, z, x0, ball: BallWorld | None = None,
                tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
        """Damped Newton inversion of the blended map, warm-started at x0."""
        from .transport import fd_jacobian

        z = np.asarray(z, dtype=float)
        x = np.asarray(x0, dtype=float).copy()
        f = self.eval(x, ball) - z
        base = 1e-5 * max(self.diameter(), 1.0)
        for _ in range(max_iter):
            err = np.hypot(*f)
            if err < tol:
                return x
            J = fd_jacobian(lambda p: self.eval(p, ball), x, base_step=base)
            try:
                step = np.linalg.solve(J, -f)
            except np.linalg.LinAlgError:
                raise NoConvergence("singular Jacobian during partial-map inversion")
            lam = 1.0
            for _ in range(30):
                x_new = x + lam * step
                try:
                    f_new = self.eval(x_new, ball) - z
                except NegativeBeta:
                    lam *= 0.5
                    continue
                if np.hypot(*f_new) < err:
                    x, f = x_new, f_new
                    break
                lam *= 0.5
            else:
                raise NoConvergence("damped Newton stalled inverting the partial map")
        raise NoConvergence(
            f"partial-map inversion did not reach {tol} in {max_iter} iterations")

    def diameter(self) -> float:
        lo = self.world.outer.min(axis=0)
        hi = self.world.outer.max(axis=0)
        return float(np.hypot(*(hi - lo)))


def _densified(poly: np.ndarray, per_edge: int) -> np.ndarray:
    if per_edge <= 1:
        return poly
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        for k in range(per_edge):
            t = k / per_edge
            out.append(a + t * (b - a))
    return np.asarray(out)
