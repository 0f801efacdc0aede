"""LQR synthesis, extended state observers and the ADRC balancing loop.

The controller is built from the *estimated* aggregate body while the plant
runs the true one. The controller measures wheel position and its believed
pitch, which differs from the true pitch by the gap between the estimated and
true balance angles. The observers lump that mismatch into the total
disturbance estimates ``f_x`` and ``f_theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .errors import (
    BalanceTimeoutError,
    InvalidParameterError,
    ObserverDivergedError,
    SimulationDivergedError,
    SynthesisError,
)
from .kinematics import ChainGeometry, com_of, solve_balance_angle
from .plant import AggregateBody, Linearization, WheelParams, WipPlant, aggregate

DEFAULT_Q = (300.0, 100.0, 500.0, 200.0)
DEFAULT_R = 1.0


def care_residual(A, B, Q, R, P) -> float:
    A, B, Q, P = (np.atleast_2d(np.asarray(M, float)) for M in (A, B, Q, P))
    B = B.reshape(A.shape[0], -1)
    R = np.atleast_2d(np.asarray(R, float))
    res = A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q
    return float(np.linalg.norm(res))


def _stabilizing_seed(A, B) -> np.ndarray:
    """Bass pole-shift gain: any controllable pair is stabilized by it."""
    n = A.shape[0]
    if np.max(np.linalg.eigvals(A).real) < 0:
        return np.zeros((B.shape[1], n))
    eig = np.linalg.eigvals(A)
    shift = np.max(eig.real) + max(np.max(np.abs(eig)), 1.0)
    As = A + shift * np.eye(n)
    Z = solve_continuous_lyapunov(As, 2 * B @ B.T)
    Z = 0.5 * (Z + Z.T)
    if np.min(np.linalg.eigvalsh(Z)) <= 1e-12 * np.max(np.abs(Z)):
        raise SynthesisError("pair (A, B) is not controllable; cannot seed Newton iteration")
    return B.T @ np.linalg.inv(Z)


def solve_care(A, B, Q, R, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Stabilizing solution of ``A'P + PA - PBR^-1B'P + Q = 0``.

    Kleinman-Newton iteration: each step solves a Lyapunov equation for the
    current closed loop. Stops when the residual falls below ``tol`` or the
    iterate stops moving at machine precision.
    """
    A = np.atleast_2d(np.asarray(A, float))
    n = A.shape[0]
    B = np.asarray(B, float).reshape(n, -1)
    Q = np.atleast_2d(np.asarray(Q, float))
    R = np.atleast_2d(np.asarray(R, float))
    if np.min(np.linalg.eigvalsh(0.5 * (R + R.T))) <= 0:
        raise SynthesisError("R must be positive definite")

    K = _stabilizing_seed(A, B)
    P = np.zeros((n, n))
    for _ in range(max_iter):
        Acl = A - B @ K
        P_new = solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        P_new = 0.5 * (P_new + P_new.T)
        if not np.all(np.isfinite(P_new)):
            raise SynthesisError("Newton iteration diverged")
        step = np.linalg.norm(P_new - P)
        P = P_new
        K = np.linalg.solve(R, B.T @ P)
        if care_residual(A, B, Q, R, P) < tol or step <= 1e-15 * max(np.linalg.norm(P), 1.0):
            break
    else:
        if care_residual(A, B, Q, R, P) > 1e-6 * max(np.linalg.norm(P), 1.0):
            raise SynthesisError("Newton iteration did not converge")
    if np.max(np.linalg.eigvals(A - B @ K).real) >= 0:
        raise SynthesisError("Riccati solution is not stabilizing")
    return P


@dataclass(frozen=True)
class LqrGains:
    F_x: np.ndarray
    F_theta: np.ndarray
    P: np.ndarray

    @property
    def F(self) -> np.ndarray:
        return np.concatenate([self.F_x, self.F_theta])


def lqr_gains(lin: Linearization, Q=DEFAULT_Q, R=DEFAULT_R) -> LqrGains:
    """Full-state LQR on the coupled 4-state model, split per subsystem."""
    Q = np.diag(Q) if np.ndim(Q) == 1 else np.asarray(Q, float)
    R = np.atleast_2d(np.asarray(R, float))
    B = lin.B.reshape(4, 1)
    P = solve_care(lin.A, B, Q, R)
    F = np.linalg.solve(R, B.T @ P).reshape(-1)
    return LqrGains(F[:2].copy(), F[2:].copy(), P)


def eso_gains(omega_o: float) -> tuple[float, float, float]:
    """Observer gains placing all three error poles at ``-omega_o``."""
    if not omega_o > 0:
        raise InvalidParameterError("observer bandwidth must be positive")
    return 3 * omega_o, 3 * omega_o ** 2, omega_o ** 3


def eso_error_matrix(gains) -> np.ndarray:
    l1, l2, l3 = gains
    return np.array([[-l1, 1.0, 0.0], [-l2, 0.0, 1.0], [-l3, 0.0, 0.0]])


@dataclass(frozen=True)
class EsoState:
    """Estimates ``(position, rate, total disturbance)`` for both subsystems."""

    x: tuple[float, float, float]
    theta: tuple[float, float, float]
    gains_x: tuple[float, float, float]
    gains_theta: tuple[float, float, float]

    @classmethod
    def start(cls, x: float, theta: float, omega_o: float = 50.0) -> "EsoState":
        g = eso_gains(omega_o)
        return cls((x, 0.0, 0.0), (theta, 0.0, 0.0), g, g)


def _eso_channel_rk4(z, gains, y, bu, dt):
    l1, l2, l3 = gains

    def f(z1, z2, z3):
        e = y - z1
        return z2 + l1 * e, z3 + l2 * e + bu, l3 * e

    z1, z2, z3 = z
    a = f(z1, z2, z3)
    h = 0.5 * dt
    b = f(z1 + h * a[0], z2 + h * a[1], z3 + h * a[2])
    c = f(z1 + h * b[0], z2 + h * b[1], z3 + h * b[2])
    d = f(z1 + dt * c[0], z2 + dt * c[1], z3 + dt * c[2])
    w = dt / 6.0
    return tuple(zi + w * (ai + 2 * bi + 2 * ci + di)
                 for zi, ai, bi, ci, di in zip(z, a, b, c, d))


def eso_step(eso: EsoState, meas_x: float, meas_theta: float, u_x: float, u_theta: float,
             b_x: float, b_theta: float, dt: float, inject_input: bool = True) -> EsoState:
    """Advance both observers one RK4 step, measurement and input held.

    ``inject_input=False`` drops the ``b*u`` term from the rate channel,
    leaving the plain observer without input injection.
    """
    k = 1.0 if inject_input else 0.0
    x = _eso_channel_rk4(eso.x, eso.gains_x, meas_x, k * b_x * u_x, dt)
    th = _eso_channel_rk4(eso.theta, eso.gains_theta, meas_theta, k * b_theta * u_theta, dt)
    if not all(math.isfinite(v) for v in x + th):
        raise ObserverDivergedError("non-finite observer estimate")
    return replace(eso, x=x, theta=th)


@dataclass(frozen=True)
class TorqueCommand:
    tau: float
    u_x: float
    u_theta: float
    saturated: bool


def adrc_torque(gains: LqrGains, eso: EsoState, b_x: float, b_theta: float,
                x_ref: float = 0.0, theta_ref: float = 0.0, measured=None,
                rates=None, tau_max: float = 60.0, compensate: bool = True) -> TorqueCommand:
    """Subsystem LQR terms plus disturbance cancellation.

    ``tau = (u_x - fx/b_x) + (u_theta - ftheta/b_theta)``, clipped to
    ``+-tau_max``. Positions come from ``measured`` when given, otherwise from
    the observers; rates come from the observers unless ``rates`` is given.
    """
    if abs(b_x) <= 1e-9 or abs(b_theta) <= 1e-9:
        raise InvalidParameterError("input gains too small for disturbance compensation")
    x, th = measured if measured is not None else (eso.x[0], eso.theta[0])
    xd, thd = rates if rates is not None else (eso.x[1], eso.theta[1])
    u_x = -(gains.F_x[0] * (x - x_ref) + gains.F_x[1] * xd)
    u_th = -(gains.F_theta[0] * (th - theta_ref) + gains.F_theta[1] * thd)
    tau = u_x + u_th
    if compensate:
        tau -= eso.x[2] / b_x + eso.theta[2] / b_theta
    saturated = abs(tau) > tau_max
    if saturated:
        tau = math.copysign(tau_max, tau)
    return TorqueCommand(float(tau), float(u_x), float(u_th), saturated)


@dataclass
class ControllerConfig:
    Q: tuple = DEFAULT_Q
    R: float = DEFAULT_R
    omega_o: float = 50.0
    tau_max: float = 60.0
    dt: float = 1e-3
    compensate: bool = True
    inject_input: bool = True
    use_true_rates: bool = False


class AdrcController:
    """Stateful controller: gains from the estimated body, evolving observers."""

    def __init__(self, body_est: AggregateBody, wheels: WheelParams,
                 config: ControllerConfig | None = None):
        self.config = config or ControllerConfig()
        self.body = body_est
        self.linearization = WipPlant(body_est, wheels).linearize()
        self.gains = lqr_gains(self.linearization, self.config.Q, self.config.R)
        self.eso = EsoState.start(0.0, 0.0, self.config.omega_o)

    @property
    def b_x(self) -> float:
        return self.linearization.b_x

    @property
    def b_theta(self) -> float:
        return self.linearization.b_theta

    def reset(self, x: float, theta: float) -> None:
        self.eso = EsoState.start(x, theta, self.config.omega_o)

    def update(self, x: float, theta: float, x_ref: float = 0.0, theta_ref: float = 0.0,
               true_rates=None) -> TorqueCommand:
        cfg = self.config
        rates = true_rates if cfg.use_true_rates else None
        cmd = adrc_torque(self.gains, self.eso, self.b_x, self.b_theta, x_ref, theta_ref,
                          measured=(x, theta), rates=rates, tau_max=cfg.tau_max,
                          compensate=cfg.compensate)
        self.eso = eso_step(self.eso, x, theta, cmd.u_x, cmd.u_theta, self.b_x, self.b_theta,
                            cfg.dt, cfg.inject_input)
        return cmd


TRACE_COLUMNS = ("t", "x", "xdot", "theta", "thetadot", "tau_w", "fhat_x", "fhat_theta")


@dataclass
class BalanceResult:
    trace: np.ndarray
    saturated: np.ndarray
    settled: bool
    settle_time: float
    settled_pose: np.ndarray
    true_balance_angle: float
    believed_balance_angle: float
    peak_torque: float
    final_x_com: float


def balance_run(geom: ChainGeometry, beta_true, beta_est, locked_pose, duration: float = 30.0,
                config: ControllerConfig | None = None, tau_d: float = 0.0,
                settle_tol: float = 1e-4, settle_hold: float = 1.0,
                raise_on_timeout: bool = True) -> BalanceResult:
    """Balance the true body with a controller built from ``beta_est``.

    The robot starts at rest at the base angle the estimate believes balanced.
    Simulation stops once ``|thetadot|`` and ``|xdot|`` stay below
    ``settle_tol`` for ``settle_hold`` seconds; the settled pose is the locked
    pose with the realized base pitch.
    """
    config = config or ControllerConfig()
    dt = config.dt
    q = np.array(locked_pose, dtype=float)
    q1_true = solve_balance_angle(geom, q, beta_true)
    q1_est = solve_balance_angle(geom, q, beta_est)
    q[0] = q1_true
    plant = WipPlant(aggregate(geom, q, beta_true), WheelParams.from_geometry(geom))
    q[0] = q1_est
    ctrl = AdrcController(aggregate(geom, q, beta_est), plant.wheels, config)

    # believed pitch = true pitch + (true balance angle - believed balance angle)
    pitch_offset = q1_true - q1_est
    state = np.array([0.0, 0.0, q1_est - q1_true, 0.0])
    ctrl.reset(state[0], state[2] + pitch_offset)

    n_steps = int(round(duration / dt))
    hold_steps = int(round(settle_hold / dt))
    trace = np.empty((n_steps + 1, len(TRACE_COLUMNS)))
    sat = np.zeros(n_steps + 1, dtype=bool)
    quiet = 0
    settled = False
    k = 0
    for k in range(n_steps + 1):
        x, xd, th, thd = state
        cmd = ctrl.update(x, th + pitch_offset, true_rates=(xd, thd))
        trace[k] = (k * dt, x, xd, th, thd, cmd.tau, ctrl.eso.x[2], ctrl.eso.theta[2])
        sat[k] = cmd.saturated
        if abs(thd) < settle_tol and abs(xd) < settle_tol:
            quiet += 1
            if quiet > hold_steps:
                settled = True
                break
        else:
            quiet = 0
        if k == n_steps:
            break
        state = plant.step(state, cmd.tau, tau_d, dt)
        if abs(state[2]) >= math.pi / 2:
            raise SimulationDivergedError(f"body fell at t={(k + 1) * dt:.3f}s")

    trace = trace[:k + 1]
    sat = sat[:k + 1]
    settled_pose = np.array(locked_pose, dtype=float)
    settled_pose[0] = q1_true + state[2]
    x_com = com_of(geom, settled_pose, beta_true).x
    result = BalanceResult(trace, sat, settled, (k - hold_steps) * dt if settled else math.nan, settled_pose,
                           q1_true, q1_est, float(np.max(np.abs(trace[:, 5]))), x_com)
    if raise_on_timeout:
        if not settled:
            raise BalanceTimeoutError(f"not settled within {duration}s")
        if abs(x_com) >= 1e-3:
            raise BalanceTimeoutError(f"settled with true |x_com| = {abs(x_com):.2e} m")
    return result
