"""Obstacle-moving controller: CBF constraint rows and the convex QP.

The ball-world obstacles follow single-integrator dynamics in center and
radius.  Four barrier families keep (C1) the robot out of every obstacle,
(C2) obstacles apart, (C3) obstacles inside the workspace ball, and (C4)
obstacles off the goal anchor; a radius floor row prevents obstacle
annihilation.  The controller solves

    min ||u_q - u_q_nom||^2 + kappa ||u_rho - u_rho_nom||^2   s.t. A u <= b

with a dual active-set method (Goldfarb-Idnani), warm-started from the
previous tick's active set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, MaxIterations
from .qc_full import BallWorld


@dataclass(frozen=True)
class ClassK:
    """Linear class-K function alpha(h) = gamma * h."""

    gamma: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("class-K gain must be positive")

    def __call__(self, h: float) -> float:
        return self.gamma * h


@dataclass(frozen=True)
class ObstacleInput:
    """Per-obstacle center velocities (M, 2) and radius rates (M,)."""

    u_q: np.ndarray
    u_rho: np.ndarray

    @staticmethod
    def from_stacked(u: np.ndarray, m: int) -> "ObstacleInput":
        return ObstacleInput(u[: 2 * m].reshape(m, 2).copy(), u[2 * m:].copy())

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u_q.ravel(), self.u_rho])


# ---------------------------------------------------------------------------
# constraint rows; variables per obstacle are (u_q, u_rho)


def barrier_c1(qj, rhoj, q) -> float:
    d = np.asarray(qj, float) - np.asarray(q, float)
    return float(d @ d - rhoj * rhoj)


def row_c1(qj, rhoj, q, qdot, alpha: ClassK):
    """Robot-obstacle separation: h = |qj - q|^2 - rhoj^2."""
    qj = np.asarray(qj, float)
    d = qj - np.asarray(q, float)
    h = float(d @ d - rhoj * rhoj)
    A = np.array([-2.0 * d[0], -2.0 * d[1], 2.0 * rhoj])
    b = float(-2.0 * d @ np.asarray(qdot, float) + alpha(h))
    return A, b


def barrier_c2(qj, qk, rhoj, rhok) -> float:
    d = np.asarray(qj, float) - np.asarray(qk, float)
    return float(d @ d - (rhoj + rhok) ** 2)


def row_c2(qj, qk, rhoj, rhok, alpha: ClassK):
    """Obstacle-obstacle separation: h = |qj - qk|^2 - (rhoj + rhok)^2.
    Row spans (u_qj, u_qk, u_rhoj, u_rhok)."""
    d = np.asarray(qj, float) - np.asarray(qk, float)
    h = float(d @ d - (rhoj + rhok) ** 2)
    s = 2.0 * (rhoj + rhok)
    A = np.array([-2.0 * d[0], -2.0 * d[1], 2.0 * d[0], 2.0 * d[1], s, s])
    return A, float(alpha(h))


def barrier_c3(qj, rhoj, q0, rho0) -> float:
    d = np.asarray(qj, float) - np.asarray(q0, float)
    return float((rho0 - rhoj) ** 2 - d @ d)


def row_c3(qj, rhoj, q0, rho0, alpha: ClassK):
    """Containment in the workspace ball: h = (rho0 - rhoj)^2 - |qj - q0|^2."""
    d = np.asarray(qj, float) - np.asarray(q0, float)
    h = float((rho0 - rhoj) ** 2 - d @ d)
    A = np.array([2.0 * d[0], 2.0 * d[1], 2.0 * (rho0 - rhoj)])
    return A, float(alpha(h))


def barrier_c4(qj, rhoj, qg) -> float:
    d = np.asarray(qj, float) - np.asarray(qg, float)
    return float(d @ d - rhoj * rhoj)


def row_c4(qj, rhoj, qg, alpha: ClassK):
    """Goal-anchor clearance: h = |qj - qg|^2 - rhoj^2."""
    d = np.asarray(qj, float) - np.asarray(qg, float)
    h = float(d @ d - rhoj * rhoj)
    A = np.array([-2.0 * d[0], -2.0 * d[1], 2.0 * rhoj])
    return A, float(alpha(h))


def nominal_obstacle_input(ball: BallWorld, kp: float) -> ObstacleInput:
    """Proportional homing toward the construction-time centers and radii."""
    return ObstacleInput(kp * (ball.q_init - ball.q), kp * (ball.rho_init - ball.rho))


# ---------------------------------------------------------------------------
# problem assembly


@dataclass
class QPProblem:
    """Stacked QP data over u = [u_q1 .. u_qM, u_rho1 .. u_rhoM].

    ``A``/``b`` hold the 3M + M(M-1)/2 CBF rows (C1, C3, C4 per obstacle,
    C2 per unordered pair); ``A_box``/``b_box`` hold the radius-floor rows.
    """

    H: np.ndarray
    u_nom: np.ndarray
    A: np.ndarray
    b: np.ndarray
    A_box: np.ndarray = None
    b_box: np.ndarray = None
    m: int = 0

    def all_rows(self):
        if self.A_box is None or not len(self.A_box):
            return self.A, self.b
        return np.vstack([self.A, self.A_box]), np.concatenate([self.b, self.b_box])


@dataclass(frozen=True)
class Gains:
    """Per-family class-K gains plus the objective and homing parameters."""

    alpha_c1: ClassK = field(default_factory=ClassK)
    alpha_c2: ClassK = field(default_factory=ClassK)
    alpha_c3: ClassK = field(default_factory=ClassK)
    alpha_c4: ClassK = field(default_factory=ClassK)
    kappa: float = 1.0
    kp: float = 1.0
    rho_min_frac: float = 1e-3


def assemble_qp(ball: BallWorld, q_robot, qdot_robot, q_goal,
                gains: Gains, u_nom: ObstacleInput | None = None) -> QPProblem:
    """Build the obstacle QP for the current ball-world state.

    ``q_robot``/``qdot_robot`` are the mapped robot position and the
    pushforward of its nominal velocity; ``q_goal`` is the blend anchor in
    ball coordinates.
    """
    m = ball.m
    nv = 3 * m
    if u_nom is None:
        u_nom = nominal_obstacle_input(ball, gains.kp)
    H = np.ones(nv)
    H[2 * m:] = gains.kappa
    rows, rhs = [], []

    def embed(j, A3, b):
        row = np.zeros(nv)
        row[2 * j: 2 * j + 2] = A3[:2]
        row[2 * m + j] = A3[2]
        rows.append(row)
        rhs.append(b)

    for j in range(m):
        embed(j, *row_c1(ball.q[j], ball.rho[j], q_robot, qdot_robot, gains.alpha_c1))
    for j in range(m):
        embed(j, *row_c3(ball.q[j], ball.rho[j], ball.q0, ball.rho0, gains.alpha_c3))
    for j in range(m):
        embed(j, *row_c4(ball.q[j], ball.rho[j], q_goal, gains.alpha_c4))
    for j in range(m):
        for k in range(j + 1, m):
            A6, b = row_c2(ball.q[j], ball.q[k], ball.rho[j], ball.rho[k],
                           gains.alpha_c2)
            row = np.zeros(nv)
            row[2 * j: 2 * j + 2] = A6[:2]
            row[2 * k: 2 * k + 2] = A6[2:4]
            row[2 * m + j] = A6[4]
            row[2 * m + k] = A6[5]
            rows.append(row)
            rhs.append(b)

    # radius floor: rho_j stays above rho_min so the mapping never degenerates
    rho_min = gains.rho_min_frac * ball.rho0
    A_box = np.zeros((m, nv))
    b_box = np.empty(m)
    for j in range(m):
        A_box[j, 2 * m + j] = -1.0
        b_box[j] = gains.alpha_c1.gamma * (ball.rho[j] - rho_min)

    A = np.asarray(rows).reshape(len(rows), nv)
    return QPProblem(H, u_nom.stacked(), A, np.asarray(rhs), A_box, b_box, m)


# ---------------------------------------------------------------------------
# dual active-set solver (Goldfarb-Idnani)


def solve_obstacle_qp(problem: QPProblem, warm_start=None,
                      tol: float = 1e-10, max_iter: int = 200):
    """Minimizer of the obstacle QP, with the active set used.

    Starts from the unconstrained optimum and adds violated rows one at a
    time, keeping dual feasibility (Goldfarb-Idnani).  Returns
    ``(ObstacleInput, info)`` where info carries iterations and the active
    set for warm-starting the next tick.

    The CBF rows alone are always feasible (shrinking everything fast is a
    universal escape); the artifact radius-floor rows can contradict them
    in extreme states, so on infeasibility the floor is dropped for this
    solve and ``info["floor_dropped"]`` is set.
    """
    try:
        return _gi_solve(problem, *problem.all_rows(), warm_start, tol, max_iter)
    except Infeasible:
        if problem.A_box is None or not len(problem.A_box):
            raise
    out, info = _gi_solve(problem, problem.A, problem.b, warm_start, tol, max_iter)
    info["floor_dropped"] = True
    return out, info


def _gi_solve(problem: QPProblem, A, b, warm_start, tol, max_iter):
    hinv = 1.0 / problem.H
    u_nom = problem.u_nom
    n = len(u_nom)

    u = u_nom.copy()
    active: list = []
    lam = np.zeros(0)

    if warm_start:
        cand = [i for i in warm_start if i < len(b)]
        if cand:
            N = A[cand].T
            M = N.T @ (hinv[:, None] * N)
            try:
                lam_w = np.linalg.solve(M, N.T @ u_nom - b[cand])
            except np.linalg.LinAlgError:
                lam_w = None
            if lam_w is not None and np.all(lam_w > tol):
                active = list(cand)
                lam = lam_w
                u = u_nom - hinv * (N @ lam)

    iters = 0
    while True:
        iters += 1
        if iters > max_iter:
            raise MaxIterations(f"QP active-set did not converge in {max_iter} steps")
        viol = A @ u - b
        p = int(np.argmax(viol))
        if viol[p] <= tol * max(1.0, float(np.abs(b).max() if len(b) else 1.0)):
            break
        # inner loop: take steps toward satisfying row p
        guard = 0
        lam_p = 0.0
        while True:
            guard += 1
            if guard > max_iter:
                raise MaxIterations("QP inner loop stalled")
            cp = A[p]
            s = float(cp @ u - b[p])
            if s <= tol:
                if lam_p > 0.0:
                    active.append(p)
                    lam = np.append(lam, lam_p)
                break
            if active:
                N = A[active].T
                M = N.T @ (hinv[:, None] * N)
                try:
                    Minv = np.linalg.inv(M)
                except np.linalg.LinAlgError:
                    Minv = np.linalg.pinv(M)
                r = Minv @ (N.T @ (hinv * cp))
                z = hinv * cp - hinv * (N @ r)
            else:
                r = np.zeros(0)
                z = hinv * cp
            denom = float(cp @ z)
            # dual blocking step
            t1 = np.inf
            j_block = -1
            for idx, j in enumerate(active):
                if r[idx] > tol:
                    tj = lam[idx] / r[idx]
                    if tj < t1:
                        t1, j_block = tj, idx
            t2 = s / denom if denom > tol else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                raise Infeasible("obstacle QP has no feasible point")
            if len(active):
                lam = lam - t * r
            u = u - t * z
            lam_p += t
            if t2 <= t1:
                active.append(p)
                lam = np.append(lam, lam_p)
                break
            lam = np.delete(lam, j_block)
            active.pop(j_block)

    info = {"iterations": iters, "active_set": list(active), "floor_dropped": False,
            "kkt_residual": _kkt_residual(problem, A, b, u, active, lam)}
    return ObstacleInput.from_stacked(u, problem.m), info


def _kkt_residual(problem, A, b, u, active, lam) -> float:
    grad = 2.0 * problem.H * (u - problem.u_nom)
    if active:
        grad = grad + A[active].T @ (2.0 * lam)
    res = float(np.abs(grad).max())
    viol = A @ u - b
    res = max(res, float(viol.max()) if len(viol) else 0.0)
    if active:
        res = max(res, float(np.abs(viol[active]).max()))
    return res
