"""Gradient descent on the mass parameters from balanced-pose observations.

At a balanced pose the true x-CoM is zero, so the model prediction
``phi(q) @ beta`` is itself the error. The per-pose cost is half its square.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, LearningDivergedError
from .mass_model import masses, project_mass_sum


def cost(phi, beta) -> float:
    return 0.5 * float(np.dot(phi, beta)) ** 2


def gradient(phi, beta) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    return phi * float(np.dot(phi, beta))


@dataclass(frozen=True)
class LearningConfig:
    """Step size, stopping rule and projection switch.

    ``eta`` is scaled for features divided by a ~100 kg total mass, where
    ``|phi|^2`` is about 1e-3, so ``eta * |phi|^2`` lands near 0.15.
    Projection is off by default so that training on a filtered pose stream
    follows the same plain gradient steps the filter assumed.
    """

    eta: float = 200.0
    x_tol: float = 2e-3
    n_consecutive: int = 10
    project: bool = False
    max_iterations: int = 100_000
    total_mass: float | None = None
    early_stop: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise InvalidParameterError("eta must be positive")
        if not self.x_tol > 0:
            raise InvalidParameterError("x_tol must be positive")
        if self.n_consecutive < 1:
            raise InvalidParameterError("n_consecutive must be at least 1")
        if self.project and not (self.total_mass and self.total_mass > 0):
            raise InvalidParameterError("projection needs a positive total_mass")


def update(beta, phi, config: LearningConfig) -> np.ndarray:
    """One gradient step, followed by the mass-sum projection if enabled."""
    phi = np.asarray(phi, dtype=float)
    gain = config.eta * float(phi @ phi)
    if gain >= 2:
        warnings.warn(f"eta*|phi|^2 = {gain:.3g} >= 2: step does not contract on this pose",
                      RuntimeWarning, stacklevel=2)
    new = np.asarray(beta, dtype=float) - config.eta * gradient(phi, beta)
    if config.project:
        new, _ = project_mass_sum(new, config.total_mass)
    return new


def beta_digest(beta) -> str:
    return hashlib.sha1(np.ascontiguousarray(beta, dtype=np.float64).tobytes()).hexdigest()[:12]


@dataclass
class LearningTrace:
    pose_ids: np.ndarray
    error_pre: np.ndarray
    error_post: np.ndarray
    mass_sum: np.ndarray
    beta_hashes: list

    def __len__(self):
        return self.pose_ids.size

    @property
    def iterations(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)


@dataclass
class FitResult:
    beta: np.ndarray
    trace: LearningTrace
    stop_reason: str  # "converged", "stream_exhausted" or "max_iterations"
    checkpoints: list


def fit(beta0, features, config: LearningConfig, pose_ids=None, checkpoint_every=None) -> FitResult:
    """Apply ``update`` for each feature column in order until the error settles.

    ``features`` is ``(4L, n)``, one column per observed balanced pose. The
    run stops once the pre-update error stays below ``x_tol`` for
    ``n_consecutive`` poses. If the running mean error (window of
    ``5 * n_consecutive`` poses) grows past twice its minimum while above
    ``x_tol``, the step size is deemed too large and the fit aborts.
    """
    Phi = np.asarray(features, dtype=float)
    if Phi.ndim != 2 or Phi.shape[1] == 0:
        raise InvalidParameterError("need a non-empty (4L, n) feature matrix")
    ids = np.arange(Phi.shape[1]) if pose_ids is None else np.asarray(pose_ids)
    beta = np.array(beta0, dtype=float)
    n = min(Phi.shape[1], config.max_iterations)

    pre = np.empty(n)
    post = np.empty(n)
    msum = np.empty(n)
    hashes = []
    checkpoints = [beta.copy()] if checkpoint_every else []
    quiet = 0
    w = 5 * config.n_consecutive
    best_window = np.inf
    reason = "max_iterations" if n < Phi.shape[1] else "stream_exhausted"
    k = -1
    for k in range(n):
        phi = Phi[:, k]
        pre[k] = phi @ beta
        beta = update(beta, phi, config)
        post[k] = phi @ beta
        msum[k] = masses(beta).sum()
        hashes.append(beta_digest(beta))
        if checkpoint_every and (k + 1) % checkpoint_every == 0:
            checkpoints.append(beta.copy())

        quiet = quiet + 1 if abs(pre[k]) < config.x_tol else 0
        if config.early_stop and quiet >= config.n_consecutive:
            reason = "converged"
            break
        if k + 1 >= w:
            window = np.mean(np.abs(pre[k + 1 - w:k + 1]))
            best_window = min(best_window, window)
            if window > 2 * best_window and window > config.x_tol:
                raise LearningDivergedError(
                    f"running mean error {window:.3e} doubled from minimum {best_window:.3e}")

    m = k + 1
    trace = LearningTrace(ids[:m].copy(), pre[:m], post[:m], msum[:m], hashes)
    return FitResult(beta, trace, reason, checkpoints)
