"""Velocity and state transport between the real and ball worlds.

Two realizations: map control inputs through the transformation Jacobian
(exact per-triangle linear part for PL maps, varying-step finite
differences for the analytic blended map), or map states through the
transformation and its inverse.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import NoConvergence, OutsideDomain, SingularJacobian
from .geometry import PLMap


class TransportMode(str, Enum):
    STATE = "state_mapping"
    INPUT = "input_mapping"


_COND_LIMIT = 1e8


def fd_jacobian(f, x, base_step: float = 1e-5, inside=None) -> np.ndarray:
    """Varying-step central-difference Jacobian of a planar map.

    Starts at ``base_step`` and halves the step until two successive
    estimates agree to 1e-6 relative or the step drops below 1e-10.
    Probes that leave the admissible region (``inside`` predicate false, or
    the map raising) fall back to one-sided differences.
    """
    x = np.asarray(x, dtype=float)
    step = float(base_step)
    prev = None
    last_pair = (None, None)
    while step >= 1e-10:
        J = np.empty((2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            J[:, k] = _fd_column(f, x, e, inside)
        if prev is not None:
            scale = max(float(np.abs(prev).max()), 1e-12)
            if float(np.abs(J - prev).max()) <= 1e-6 * scale:
                return J
            last_pair = (prev, J)
        prev = J
        step *= 0.5
    raise NoConvergence(
        f"finite-difference Jacobian did not stabilize; last estimates "
        f"{last_pair[0]} vs {last_pair[1]}")


def _probe(f, p, inside):
    if inside is not None and not inside(p):
        return None
    try:
        return np.asarray(f(p), dtype=float)
    except Exception:
        return None


def _fd_column(f, x, e, inside):
    h = float(np.abs(e).max())
    fp = _probe(f, x + e, inside)
    fm = _probe(f, x - e, inside)
    if fp is not None and fm is not None:
        return (fp - fm) / (2.0 * h)
    f0 = np.asarray(f(x), dtype=float)
    if fp is not None:
        return (fp - f0) / h
    if fm is not None:
        return (f0 - fm) / h
    raise OutsideDomain("both finite-difference probes left the domain")


def _check_condition(J: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(J, compute_uv=False)
    if s[-1] <= 0 or s[0] / s[-1] > _COND_LIMIT:
        raise SingularJacobian(
            f"map Jacobian condition number {s[0] / max(s[-1], 1e-300):.3e}")
    return J


def map_jacobian(mapping, x, hint=None):
    """(Jacobian, face hint) of the real-to-ball map at x.

    PL maps use the exact per-triangle linear part; analytic maps use
    varying-step finite differences.
    """
    if isinstance(mapping, PLMap):
        from .geometry import locate

        fi, _ = locate(mapping.mesh, x, hint)
        return _check_condition(mapping.jacobian_at_face(fi)), fi
    base = 1e-5 * max(getattr(mapping, "diameter", lambda: 1.0)(), 1.0)
    inside = getattr(mapping, "contains", None)
    J = fd_jacobian(lambda p: mapping.eval(p), x, base_step=base, inside=inside)
    return _check_condition(J), None


def pushforward_velocity(mapping, x, xdot, hint=None):
    """zdot = J(x) xdot.  Returns (zdot, face hint)."""
    J, fi = map_jacobian(mapping, x, hint)
    return J @ np.asarray(xdot, dtype=float), fi


def pullback_velocity(mapping, z, zdot, x_guess=None, hint=None):
    """xdot = J(x)^-1 zdot at x = phi^-1(z).  Returns (xdot, x, hint)."""
    x, fi = transport_state_inverse(mapping, z, x_guess=x_guess, hint=hint)
    J, fi = map_jacobian(mapping, x, fi if fi is not None else hint)
    return np.linalg.solve(J, np.asarray(zdot, dtype=float)), x, fi


def transport_state(mapping, x, hint=None):
    """z = phi(x).  Returns (z, face hint)."""
    if isinstance(mapping, PLMap):
        z, fi = mapping.eval_with_face(x, hint)
        return z, fi
    return mapping.eval(x), None


def transport_state_inverse(mapping, z, x_guess=None, hint=None):
    """x = phi^-1(z).  Returns (x, face hint)."""
    if isinstance(mapping, PLMap):
        fi, lam = mapping.locate_image(z, hint)
        return lam @ mapping.mesh.vertices[mapping.mesh.faces[fi]], fi
    if x_guess is None:
        raise NoConvergence("analytic-map inversion needs a warm start")
    return mapping.inverse(z, x_guess), None
