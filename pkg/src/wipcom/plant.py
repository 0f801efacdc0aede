"""Locked-joint body as a single rigid pendulum on wheels.

State ordering is ``[x, xdot, theta, thetadot]``: wheel ground position and
pitch of the axle-to-CoM line from vertical (positive toward +x). Equations
of motion, with ``Mt = m + m_w + I_w / r**2``::

    Mt*xdd + m*l*cos(th)*thdd - m*l*sin(th)*thd**2 = tau_w / r
    m*l*cos(th)*xdd + I_a*thdd - m*g*l*sin(th)     = -tau_w + tau_d

No friction, so the unforced system conserves ``energy``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    InvalidParameterError,
    NumericDegeneracyError,
    SimulationDivergedError,
)
from .kinematics import ChainGeometry, com_of, link_coms

GRAVITY = 9.81


@dataclass(frozen=True)
class AggregateBody:
    mass: float
    length: float
    balance_offset: float
    inertia: float


@dataclass(frozen=True)
class WheelParams:
    radius: float = 0.25
    mass: float = 12.0
    inertia: float = 0.375

    @classmethod
    def from_geometry(cls, geom: ChainGeometry) -> "WheelParams":
        return cls(geom.wheel_radius, geom.wheel_mass, geom.wheel_inertia)


@dataclass(frozen=True)
class Linearization:
    A: np.ndarray
    B: np.ndarray
    b_x: float
    b_theta: float
    B_disturbance: np.ndarray


def aggregate(geom: ChainGeometry, pose, beta) -> AggregateBody:
    """Collapse the locked chain into mass, axle-to-CoM distance and inertia.

    Links are point masses at their CoMs. ``balance_offset`` is the pitch of
    the CoM line at the given pose, so the balancing base angle is
    ``pose[0] - balance_offset``.
    """
    world, m = link_coms(geom, pose, beta)
    com = com_of(geom, pose, beta)
    length = math.hypot(com.x, com.z)
    if length < 1e-9:
        raise DegenerateConfigurationError("aggregate CoM lies on the axle")
    inertia = float(np.sum(m * (world[:, 0] ** 2 + world[:, 2] ** 2)))
    return AggregateBody(float(m.sum()), length, math.atan2(com.x, com.z), inertia)


@dataclass(frozen=True)
class WipPlant:
    body: AggregateBody
    wheels: WheelParams = WheelParams()
    g: float = GRAVITY

    def __post_init__(self):
        if self.body.mass <= 0 or self.body.length < 0 or self.body.inertia <= 0:
            raise InvalidParameterError("invalid aggregate body")

    @property
    def total_translational_mass(self) -> float:
        w = self.wheels
        return self.body.mass + w.mass + w.inertia / w.radius ** 2

    def mass_matrix(self, theta: float) -> np.ndarray:
        ml = self.body.mass * self.body.length * math.cos(theta)
        return np.array([[self.total_translational_mass, ml], [ml, self.body.inertia]])

    def accelerations(self, theta, thetadot, tau_w, tau_d=0.0):
        b = self.body
        Mt = self.total_translational_mass
        ml = b.mass * b.length
        c, s = math.cos(theta), math.sin(theta)
        m12 = ml * c
        det = Mt * b.inertia - m12 * m12
        if det < 1e-12:
            raise NumericDegeneracyError(f"mass matrix determinant {det:.3e}")
        r1 = tau_w / self.wheels.radius + ml * s * thetadot * thetadot
        r2 = -tau_w + tau_d + ml * self.g * s
        return (b.inertia * r1 - m12 * r2) / det, (Mt * r2 - m12 * r1) / det

    def dynamics(self, state, tau_w: float, tau_d: float = 0.0) -> np.ndarray:
        _, xd, th, thd = state
        xdd, thdd = self.accelerations(th, thd, tau_w, tau_d)
        return np.array([xd, xdd, thd, thdd])

    def energy(self, state) -> float:
        _, xd, th, thd = state
        b = self.body
        kinetic = (0.5 * self.total_translational_mass * xd ** 2
                   + b.mass * b.length * math.cos(th) * xd * thd + 0.5 * b.inertia * thd ** 2)
        return kinetic + b.mass * self.g * b.length * math.cos(th)

    def linearize(self) -> Linearization:
        """Analytic Jacobians at the upright equilibrium with ``tau_w`` as input."""
        b = self.body
        Mt = self.total_translational_mass
        ml = b.mass * b.length
        det = Mt * b.inertia - ml * ml
        if det < 1e-12:
            raise NumericDegeneracyError(f"mass matrix determinant {det:.3e}")
        r = self.wheels.radius
        A = np.zeros((4, 4))
        A[0, 1] = A[2, 3] = 1.0
        A[1, 2] = -ml * ml * self.g / det
        A[3, 2] = Mt * ml * self.g / det
        b_x = (b.inertia / r + ml) / det
        b_theta = -(ml / r + Mt) / det
        B = np.array([0.0, b_x, 0.0, b_theta])
        Bd = np.array([0.0, -ml / det, 0.0, Mt / det])
        return Linearization(A, B, b_x, b_theta, Bd)

    def step(self, state, tau_w: float, tau_d: float = 0.0, dt: float = 1e-3) -> np.ndarray:
        """One RK4 step with torques held over the step."""
        if not 0 < dt <= 0.01:
            raise InvalidParameterError("dt must lie in (0, 0.01]")
        new = rk4_step(lambda y: self.dynamics(y, tau_w, tau_d), np.asarray(state, float), dt)
        if not np.all(np.isfinite(new)):
            raise SimulationDivergedError("non-finite plant state")
        return new


def rk4_step(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def linearize(body: AggregateBody, wheels: WheelParams, g: float = GRAVITY) -> Linearization:
    return WipPlant(body, wheels, g).linearize()
