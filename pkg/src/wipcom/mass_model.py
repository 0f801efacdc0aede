"""Mass parameter vectors: ground truth, perturbed estimates, ensembles.

A parameter vector stacks one block per link, ``[m x, m y, m z, m]``, where
``(x, y, z)`` is the link CoM in its own frame. The model x-CoM is linear in
it (see :func:`wipcom.kinematics.feature_vector`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InfeasibleTargetError, InvalidParameterError
from .kinematics import ChainGeometry, feature_matrix, sample_balanced_poses

# Base link 70 kg and third link 6 kg come from the reference robot; the rest
# are configuration defaults, not measured values.
DEFAULT_LINK_MASSES = (70.0, 8.0, 6.0, 6.0, 4.0, 4.0, 2.0)

MIN_MASS = 1e-6


def masses(beta) -> np.ndarray:
    return np.asarray(beta, dtype=float).reshape(-1, 4)[:, 3]


def make_truth(geom: ChainGeometry, link_masses) -> np.ndarray:
    """Ground truth with each link CoM at mid-link on the link axis."""
    m = np.asarray(link_masses, dtype=float)
    if m.size != geom.n_links:
        raise DimensionError("need one mass per link")
    if np.any(m <= 0):
        raise InvalidParameterError("link masses must be positive")
    if not np.isclose(m.sum(), geom.total_mass, rtol=1e-12, atol=0):
        raise InvalidParameterError(
            f"link masses sum to {m.sum()}, geometry total mass is {geom.total_mass}")
    beta = np.zeros((geom.n_links, 4))
    beta[:, 0] = m * geom.link_lengths / 2
    beta[:, 3] = m
    return beta.reshape(-1)


def make_default_truth(geom: ChainGeometry) -> np.ndarray:
    if geom.n_links != len(DEFAULT_LINK_MASSES):
        raise DimensionError("default truth is defined for the 7-link chain")
    return make_truth(geom, DEFAULT_LINK_MASSES)


def perturb(beta_true, noise_fraction: float, rng) -> np.ndarray:
    """Scale every component by an independent factor ~ U[1-f, 1+f].

    ``rng`` is a seed or a ``numpy.random.Generator`` (consumed in place).
    """
    if not 0 < noise_fraction < 1:
        raise InvalidParameterError("noise_fraction must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    beta_true = np.asarray(beta_true, dtype=float)
    factors = rng.uniform(1 - noise_fraction, 1 + noise_fraction, size=beta_true.shape)
    beta = beta_true * factors
    m = beta.reshape(-1, 4)[:, 3]
    np.maximum(m, MIN_MASS, out=m)
    return beta


@dataclass(frozen=True, eq=False)
class BetaEnsemble:
    """Erroneous parameter vectors as columns of ``betas`` (shape ``(4L, n)``)."""

    betas: np.ndarray
    seed: int
    noise_fraction: float
    target_error: float
    probe_errors: np.ndarray
    attempts: int

    def __post_init__(self):
        for name in ("betas", "probe_errors"):
            getattr(self, name).setflags(write=False)

    @property
    def size(self) -> int:
        return self.betas.shape[1]


def probe_error(Phi_probe, beta, beta_true) -> float:
    """Mean absolute x-CoM prediction error over probe poses."""
    return float(np.mean(np.abs(Phi_probe.T @ (np.asarray(beta) - beta_true))))


def generate_ensemble(beta_true, n_betas: int, target_error: float, geom: ChainGeometry,
                      seed: int, noise_fraction: float = 0.5, n_probe: int = 100,
                      max_rejections: int = 10_000) -> BetaEnsemble:
    """Rejection-sample perturbed vectors with probe error in ``[e, 2e]``.

    The probe set is ``n_probe`` random poses balanced under ``beta_true``.
    """
    if n_betas < 1:
        raise InvalidParameterError("n_betas must be at least 1")
    if not target_error > 0:
        raise InvalidParameterError("target_error must be positive")
    beta_true = np.asarray(beta_true, dtype=float)
    probe_rng, sample_rng = (np.random.default_rng(s)
                             for s in np.random.SeedSequence(seed).spawn(2))
    probe, _ = sample_balanced_poses(geom, beta_true, n_probe, probe_rng)
    Phi = feature_matrix(geom, probe)

    cols, errs = [], []
    attempts = rejected = 0
    while len(cols) < n_betas:
        cand = perturb(beta_true, noise_fraction, sample_rng)
        attempts += 1
        err = probe_error(Phi, cand, beta_true)
        if target_error <= err <= 2 * target_error:
            cols.append(cand)
            errs.append(err)
            rejected = 0
        else:
            rejected += 1
            if rejected >= max_rejections:
                raise InfeasibleTargetError(
                    f"{max_rejections} consecutive rejections for target {target_error} m "
                    f"at noise {noise_fraction}")
    return BetaEnsemble(np.column_stack(cols), seed, noise_fraction, target_error,
                        np.array(errs), attempts)


def project_mass_sum(beta, total_mass: float) -> tuple[np.ndarray, bool]:
    """Project link masses onto ``sum(m) = total_mass``.

    Equal shift of every mass (the Lagrange-multiplier solution of the
    least-change problem); first-moment components are untouched. If a mass
    would drop to ``MIN_MASS`` or below it is clamped there and the remaining
    deficit is shared among the unclamped links. Returns the projected vector
    and whether any clamping happened.
    """
    if not total_mass > 0:
        raise InvalidParameterError("total_mass must be positive")
    out = np.array(beta, dtype=float)
    m = out.reshape(-1, 4)[:, 3]
    if abs(m.sum() - total_mass) <= 1e-12 * total_mass:
        return out, False
    free = np.ones(m.size, dtype=bool)
    clamped = False
    target = m.copy()
    while True:
        fixed_sum = target[~free].sum()
        shift = (total_mass - fixed_sum - m[free].sum()) / free.sum()
        trial = m + shift
        low = free & (trial <= MIN_MASS)
        if not low.any():
            target[free] = trial[free]
            break
        clamped = True
        target[low] = MIN_MASS
        free &= ~low
        if not free.any():
            raise InvalidParameterError("total mass too small for positive link masses")
    m[:] = target
    return out, clamped
