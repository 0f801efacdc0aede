"""Planar serial-chain kinematics for a wheeled humanoid body.

All joints pitch about the wheel-axle direction. Frame 0 sits at the axle
midpoint with x along the heading and z vertical. Link ``i`` has cumulative
pitch ``Theta_i = q_1 + ... + q_i``; ``q_1 = 0`` puts the base link's local
+x axis on world +z, so an all-zero pose is a straight, upright chain.

A local point ``(xl, yl, zl)`` of frame ``i`` lands at world x
``xl*sin(Theta_i) + zl*cos(Theta_i) + o_x,i``. Frame origins are chained along
each link's local x axis, link ``i`` contributing an offset of ``l_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DegenerateConfigurationError,
    DimensionError,
    InvalidParameterError,
    PoolGenerationError,
)

DEFAULT_LINK_LENGTHS = (0.55, 0.30, 0.30, 0.30, 0.25, 0.25, 0.20)


@dataclass(frozen=True, eq=False)
class ChainGeometry:
    """Link lengths, joint limits, total mass and wheel parameters.

    The wheel fields are not used by the kinematics; the plant reads them.
    """

    link_lengths: np.ndarray
    joint_lower: np.ndarray
    joint_upper: np.ndarray
    total_mass: float
    wheel_radius: float = 0.25
    wheel_mass: float = 12.0
    wheel_inertia: float = 0.375

    def __post_init__(self):
        for name in ("link_lengths", "joint_lower", "joint_upper"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        L = self.link_lengths.size
        if L < 1:
            raise InvalidParameterError("chain needs at least one link")
        if self.joint_lower.size != L or self.joint_upper.size != L:
            raise DimensionError("joint limits must have one entry per link")
        if np.any(self.link_lengths <= 0):
            raise InvalidParameterError("link lengths must be positive")
        if np.any(self.joint_lower >= self.joint_upper):
            raise InvalidParameterError("joint limit intervals must be non-empty")
        if not self.total_mass > 0:
            raise InvalidParameterError("total mass must be positive")
        if not (self.wheel_radius > 0 and self.wheel_mass >= 0 and self.wheel_inertia >= 0):
            raise InvalidParameterError("invalid wheel parameters")

    @property
    def n_links(self) -> int:
        return self.link_lengths.size

    @property
    def n_params(self) -> int:
        return 4 * self.link_lengths.size

    def within_limits(self, q) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.joint_lower) and np.all(q <= self.joint_upper))


def default_geometry(total_mass: float = 100.0) -> ChainGeometry:
    """Seven-link sagittal chain; limits +-pi/2 on the base, +-2 rad elsewhere."""
    L = len(DEFAULT_LINK_LENGTHS)
    lower = np.full(L, -2.0)
    upper = np.full(L, 2.0)
    lower[0], upper[0] = -np.pi / 2, np.pi / 2
    return ChainGeometry(np.array(DEFAULT_LINK_LENGTHS), lower, upper, total_mass)


class ComCoordinates(NamedTuple):
    x: float
    y: float
    z: float


def _check_pose(geom: ChainGeometry, q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size != geom.n_links:
        raise DimensionError(f"pose has {q.size} angles, chain has {geom.n_links} links")
    return q


def _check_beta(geom: ChainGeometry, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != geom.n_params:
        raise DimensionError(f"beta has {beta.size} entries, expected {geom.n_params}")
    return beta


def _pitches_and_origins(geom: ChainGeometry, q: np.ndarray):
    theta = np.cumsum(q)
    s, c = np.sin(theta), np.cos(theta)
    ox = np.zeros(geom.n_links)
    oz = np.zeros(geom.n_links)
    ox[1:] = np.cumsum(geom.link_lengths[:-1] * s[:-1])
    oz[1:] = np.cumsum(geom.link_lengths[:-1] * c[:-1])
    return s, c, ox, oz


def forward_transforms(geom: ChainGeometry, q) -> np.ndarray:
    """Homogeneous transforms ``T_i^0`` for every link, shape ``(L, 4, 4)``."""
    q = _check_pose(geom, q)
    s, c, ox, oz = _pitches_and_origins(geom, q)
    T = np.zeros((geom.n_links, 4, 4))
    # columns: images of local x, y, z; y flips so each block is a proper rotation
    T[:, 0, 0], T[:, 0, 2], T[:, 0, 3] = s, c, ox
    T[:, 1, 1] = -1.0
    T[:, 2, 0], T[:, 2, 2], T[:, 2, 3] = c, -s, oz
    T[:, 3, 3] = 1.0
    return T


def feature_vector(geom: ChainGeometry, q) -> np.ndarray:
    """phi(q) with ``phi @ beta`` equal to the model's x-CoM.

    Block ``i`` is the first row of ``T_i^0`` divided by the known total mass,
    i.e. ``[sin Theta_i, 0, cos Theta_i, o_x,i] / M``.
    """
    q = _check_pose(geom, q)
    s, c, ox, _ = _pitches_and_origins(geom, q)
    phi = np.zeros((geom.n_links, 4))
    phi[:, 0], phi[:, 2], phi[:, 3] = s, c, ox
    return phi.reshape(-1) / geom.total_mass


def feature_matrix(geom: ChainGeometry, poses) -> np.ndarray:
    """Stack ``feature_vector`` over poses (rows) into columns, shape ``(4L, n)``."""
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    Phi = np.empty((geom.n_params, poses.shape[0]))
    for k, q in enumerate(poses):
        Phi[:, k] = feature_vector(geom, q)
    return Phi


def link_coms(geom: ChainGeometry, q, beta) -> tuple[np.ndarray, np.ndarray]:
    """World-frame CoM of every link and the link masses recovered from beta."""
    q = _check_pose(geom, q)
    blocks = _check_beta(geom, beta).reshape(-1, 4)
    masses = blocks[:, 3]
    if np.any(masses <= 0):
        raise InvalidParameterError("every link mass in beta must be positive")
    local = np.ones((geom.n_links, 4))
    local[:, :3] = blocks[:, :3] / masses[:, None]
    T = forward_transforms(geom, q)
    world = np.einsum("lij,lj->li", T, local)[:, :3]
    return world, masses


def com_of(geom: ChainGeometry, q, beta) -> ComCoordinates:
    """Body CoM in frame 0 by mass-weighted summation over links."""
    world, masses = link_coms(geom, q, beta)
    com = masses @ world / masses.sum()
    return ComCoordinates(float(com[0]), float(com[1]), float(com[2]))


def _moments_at_zero_base(geom: ChainGeometry, q: np.ndarray, beta: np.ndarray):
    """First mass moments (x, z) of the body with q_1 forced to zero."""
    q0 = q.copy()
    q0[0] = 0.0
    s, c, ox, oz = _pitches_and_origins(geom, q0)
    b = beta.reshape(-1, 4)
    sx = np.sum(b[:, 0] * s + b[:, 2] * c + b[:, 3] * ox)
    sz = np.sum(b[:, 0] * c - b[:, 2] * s + b[:, 3] * oz)
    return float(sx), float(sz)


def solve_balance_angle(geom: ChainGeometry, locked, beta, tol: float = 1e-10) -> float:
    """Base pitch that puts the body CoM directly above the axle.

    ``locked[0]`` is ignored. Rotating q_1 turns the whole body rigidly, so the
    x first-moment is ``Sx*cos(q1) + Sz*sin(q1)``; the upright root (CoM above
    the axle) is its upward zero crossing, bracketed on a grid over [-pi, pi]
    and refined with Brent's method.
    """
    q = _check_pose(geom, locked).copy()
    beta = _check_beta(geom, beta)
    sx, sz = _moments_at_zero_base(geom, q, beta)
    if np.hypot(sx, sz) / geom.total_mass < 1e-12:
        raise DegenerateConfigurationError("body CoM coincides with the axle")

    def moment(q1):
        return sx * np.cos(q1) + sz * np.sin(q1)

    grid = np.linspace(-np.pi, np.pi, 65)
    vals = moment(grid)
    up = np.nonzero((vals[:-1] < 0) & (vals[1:] >= 0))[0]
    if up.size == 0:
        raise DegenerateConfigurationError("no upward sign change of the x-moment")
    k = up[0]
    if vals[k + 1] == 0.0:
        q1 = float(grid[k + 1])
    else:
        q1 = float(brentq(moment, grid[k], grid[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    q[0] = q1
    residual = feature_vector(geom, q) @ beta
    if abs(residual) >= tol:
        raise DegenerateConfigurationError(f"balance root not verified (|x_com|={abs(residual):.3e})")
    return q1


def sample_balanced_poses(geom: ChainGeometry, beta, n: int, rng: np.random.Generator,
                          max_failures: int = 10_000) -> tuple[np.ndarray, float]:
    """Draw ``n`` safe poses balanced under ``beta``.

    Body joints are uniform within their limits; q_1 is solved for balance and
    the draw is rejected if q_1 leaves its limit. Returns the poses (rows) and
    the observed acceptance rate. Fails if the acceptance rate stays below 1 %
    over ``max_failures`` consecutive draws.
    """
    beta = _check_beta(geom, beta)
    poses = np.empty((n, geom.n_links))
    accepted = draws = 0
    window_draws = window_accepts = 0
    while accepted < n:
        q = rng.uniform(geom.joint_lower, geom.joint_upper)
        draws += 1
        window_draws += 1
        try:
            q[0] = solve_balance_angle(geom, q, beta)
        except DegenerateConfigurationError:
            q = None
        if q is not None and geom.within_limits(q):
            poses[accepted] = q
            accepted += 1
            window_accepts += 1
        if window_draws >= max_failures:
            if window_accepts < 0.01 * window_draws:
                raise PoolGenerationError(
                    f"acceptance rate {window_accepts / window_draws:.4f} below 1% "
                    f"over {window_draws} draws")
            window_draws = window_accepts = 0
    return poses, accepted / draws
