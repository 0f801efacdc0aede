"""Pose pools and greedy pose filtering over an ensemble of wrong models.

Each iteration picks the pool pose with the largest summed absolute
prediction error across the ensemble, takes one plain gradient step on every
ensemble member with that pose, and removes it from the pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .kinematics import ChainGeometry, feature_matrix, sample_balanced_poses


@dataclass(frozen=True, eq=False)
class PosePool:
    poses: np.ndarray      # (n_poses, L), one pose per row
    features: np.ndarray   # (4L, n_poses), column i = phi(poses[i])
    seed: int
    acceptance_rate: float

    def __post_init__(self):
        self.poses.setflags(write=False)
        self.features.setflags(write=False)

    def __len__(self):
        return self.poses.shape[0]


def generate_pool(geom: ChainGeometry, beta_true, n_poses: int, seed: int) -> PosePool:
    """Random safe poses balanced under ``beta_true``, features precomputed."""
    if n_poses < 1:
        raise InvalidParameterError("n_poses must be at least 1")
    poses, rate = sample_balanced_poses(geom, beta_true, n_poses, np.random.default_rng(seed))
    return PosePool(poses, feature_matrix(geom, poses), seed, rate)


def select_next(Phi, betas, active=None) -> tuple[int, float]:
    """Index of the column of ``Phi`` with the largest summed |error|.

    Ties go to the lowest index. ``active`` optionally masks out columns.
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim != 2 or Phi.shape[1] == 0:
        raise InvalidParameterError("empty pose pool")
    agg = np.abs(Phi.T @ np.asarray(betas, dtype=float).reshape(Phi.shape[0], -1)).sum(axis=1)
    if active is not None:
        if not np.any(active):
            raise InvalidParameterError("empty pose pool")
        agg = np.where(active, agg, -np.inf)
    i = int(np.argmax(agg))
    return i, float(agg[i])


@dataclass
class FilteredPoses:
    poses: np.ndarray
    indices: np.ndarray
    aggregate_errors: np.ndarray
    max_errors: np.ndarray
    status: str            # "converged", "pool_exhausted" or "max_iterations"
    betas: np.ndarray      # ensemble after the last update

    def __len__(self):
        return self.indices.size

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _run(pool: PosePool, betas, eta, x_tol, n_consecutive, max_iter, pick) -> FilteredPoses:
    if eta <= 0 or x_tol <= 0 or n_consecutive < 1:
        raise InvalidParameterError("eta, x_tol must be positive and n_consecutive >= 1")
    Phi = pool.features
    B = np.array(betas, dtype=float).reshape(Phi.shape[0], -1)
    gain = eta * np.max(np.sum(Phi ** 2, axis=0))
    if gain >= 2:
        raise InvalidParameterError(f"eta*|phi|^2 reaches {gain:.3g} on the pool; no contraction")
    active = np.ones(len(pool), dtype=bool)
    idx, aggs, maxes = [], [], []
    quiet = 0
    status = "pool_exhausted"
    while active.any():
        if len(idx) >= max_iter:
            status = "max_iterations"
            break
        i = pick(Phi, B, active)
        phi = Phi[:, i]
        err = phi @ B
        idx.append(i)
        aggs.append(float(np.abs(err).sum()))
        maxes.append(float(np.abs(err).max()))
        B -= eta * np.outer(phi, err)
        active[i] = False
        quiet = quiet + 1 if maxes[-1] < x_tol else 0
        if quiet >= n_consecutive:
            status = "converged"
            break
    idx = np.array(idx, dtype=int)
    return FilteredPoses(pool.poses[idx], idx, np.array(aggs), np.array(maxes), status, B)


def filter_poses(pool: PosePool, betas, eta: float, x_tol: float = 2e-3,
                 n_consecutive: int = 10, max_iter: int | None = None) -> FilteredPoses:
    """Greedy pose filtering; termination reads the selection-time errors."""
    def pick(Phi, B, active):
        return select_next(Phi, B, active)[0]

    return _run(pool, betas, eta, x_tol, n_consecutive, max_iter or len(pool), pick)


def random_baseline(pool: PosePool, betas, eta: float, x_tol: float = 2e-3,
                    n_consecutive: int = 10, seed: int = 0,
                    max_iter: int | None = None) -> FilteredPoses:
    """Same loop as :func:`filter_poses` with poses drawn uniformly without replacement."""
    order = iter(np.random.default_rng(seed).permutation(len(pool)))

    def pick(Phi, B, active):
        return int(next(order))

    return _run(pool, betas, eta, x_tol, n_consecutive, max_iter or len(pool), pick)
