"""Robot models and exact tracking of desired planar velocities.

Three built-in classes: single integrator, linear (xdot = -A x + u), and a
unicycle controlled through its look-ahead point (near-identity
diffeomorphic to a single integrator).  Custom control-affine models
supply f, g, and a tracking callback.

Every model exposes a planar ``position`` that the workspace mapping acts
on; for the unicycle this is the look-ahead point p + l (cos t, sin t),
so collision clearances are certified for that point and the simulator
inflates margins by l.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedModel


@dataclass(frozen=True)
class SingleIntegrator:
    kind: str = "single_integrator"
    kp_goal: float = 1.0
    state_dim: int = 2
    input_dim: int = 2

    def initial_state(self, position):
        return np.asarray(position, dtype=float).copy()

    def position(self, x):
        return np.asarray(x, dtype=float)

    def deriv(self, x, u):
        return np.asarray(u, dtype=float)

    def nominal(self, x, t, goal):
        return self.kp_goal * (np.asarray(goal, float) - np.asarray(x, float))

    def nominal_position_velocity(self, x, t, goal):
        return self.nominal(x, t, goal)

    def track(self, x, xdot_desired):
        return np.asarray(xdot_desired, dtype=float)


@dataclass(frozen=True)
class LinearModel:
    """xdot = -A x + u with the constant nominal input u = A x_g."""

    A: np.ndarray = field(default_factory=lambda: np.eye(2))
    kind: str = "linear"
    state_dim: int = 2
    input_dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))

    def initial_state(self, position):
        return np.asarray(position, dtype=float).copy()

    def position(self, x):
        return np.asarray(x, dtype=float)

    def deriv(self, x, u):
        return -self.A @ np.asarray(x, float) + np.asarray(u, float)

    def nominal(self, x, t, goal):
        return self.A @ np.asarray(goal, dtype=float)

    def nominal_position_velocity(self, x, t, goal):
        return self.A @ (np.asarray(goal, float) - np.asarray(x, float))

    def track(self, x, xdot_desired):
        # exact inversion: u = xdot_d + A x realizes xdot = xdot_d
        return np.asarray(xdot_desired, float) + self.A @ np.asarray(x, float)


def unicycle_track(theta: float, l: float, zdot_desired) -> tuple:
    """(v, omega) realizing the desired look-ahead point velocity.

    The point dynamics are zdot = [[cos t, -l sin t], [sin t, l cos t]]
    (v, omega); the matrix determinant is l, never singular for l > 0.
    """
    zx, zy = float(zdot_desired[0]), float(zdot_desired[1])
    c, s = math.cos(theta), math.sin(theta)
    v = c * zx + s * zy
    omega = (-s * zx + c * zy) / l
    return v, omega


@dataclass(frozen=True)
class Unicycle:
    """Unicycle (px, py, theta) steered via the look-ahead point."""

    l: float = 0.05
    kp_goal: float = 1.0
    kind: str = "unicycle"
    state_dim: int = 3
    input_dim: int = 2

    def __post_init__(self):
        if self.l <= 0:
            raise ValueError("look-ahead distance must be positive")

    def initial_state(self, position, theta: float = 0.0):
        p = np.asarray(position, dtype=float)
        return np.array([p[0] - self.l * math.cos(theta),
                         p[1] - self.l * math.sin(theta), theta])

    def position(self, x):
        return np.array([x[0] + self.l * math.cos(x[2]),
                         x[1] + self.l * math.sin(x[2])])

    def deriv(self, x, u):
        v, omega = float(u[0]), float(u[1])
        return np.array([v * math.cos(x[2]), v * math.sin(x[2]), omega])

    def nominal(self, x, t, goal):
        zdot = self.kp_goal * (np.asarray(goal, float) - self.position(x))
        return np.asarray(unicycle_track(x[2], self.l, zdot))

    def nominal_position_velocity(self, x, t, goal):
        return self.kp_goal * (np.asarray(goal, float) - self.position(x))

    def track(self, x, xdot_desired):
        return np.asarray(unicycle_track(x[2], self.l, xdot_desired))


@dataclass(frozen=True)
class CustomModel:
    """Control-affine model with caller-supplied fields.

    ``track_fn(x, xdot_desired) -> u`` realizes desired planar velocities
    (feedback-linearizable / differentially flat systems provide one);
    missing it raises UnsupportedModel at the tracking step.
    """

    f: object
    g: object
    position_fn: object
    nominal_fn: object
    track_fn: object = None
    state_dim: int = 2
    input_dim: int = 2
    kind: str = "custom"

    def initial_state(self, position):
        return np.asarray(position, dtype=float).copy()

    def position(self, x):
        return np.asarray(self.position_fn(x), dtype=float)

    def deriv(self, x, u):
        return np.asarray(self.f(x), float) + np.asarray(self.g(x), float) @ np.asarray(u, float)

    def nominal(self, x, t, goal):
        return np.asarray(self.nominal_fn(x, t, goal), dtype=float)

    def nominal_position_velocity(self, x, t, goal):
        u = self.nominal(x, t, goal)
        return np.asarray(self.deriv(x, u), dtype=float)[:2]

    def track(self, x, xdot_desired):
        if self.track_fn is None:
            raise UnsupportedModel("custom model lacks a tracking callback")
        return np.asarray(self.track_fn(x, xdot_desired), dtype=float)


def nominal_controller(model, x, t, goal):
    """The model's given goal-seeking policy."""
    return model.nominal(x, t, goal)


def track_xdot(model, x, xdot_desired):
    """Input realizing the desired planar velocity (Algorithm step star)."""
    return model.track(x, xdot_desired)


def rk4_step(model, x, u, dt: float) -> np.ndarray:
    """One explicit RK4 step with zero-order-hold input."""
    x = np.asarray(x, dtype=float)
    k1 = model.deriv(x, u)
    k2 = model.deriv(x + 0.5 * dt * k1, u)
    k3 = model.deriv(x + 0.5 * dt * k2, u)
    k4 = model.deriv(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
