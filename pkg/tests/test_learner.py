import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wipcom import (
    InvalidParameterError,
    LearningConfig,
    LearningDivergedError,
    cost,
    fit,
    generate_pool,
    gradient,
    perturb,
    update,
)
from wipcom.mass_model import masses


def fd_gradient(phi, beta, h=1e-6):
    g = np.empty_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h
        g[j] = (cost(phi, beta + e) - cost(phi, beta - e)) / (2 * h)
    return g


def test_cost_examples(rng):
    phi = np.array([1.0, 0.0, -1.0, 0.0])
    assert cost(phi, np.array([1.0, 5.0, 1.0, 3.0])) == 0.0
    M, c = 10.0, 0.3
    assert cost(np.array([1 / M, 0, 0, 0]), np.array([M * c, 0, 0, 0])) == pytest.approx(0.5 * c * c)
    phi, beta = rng.normal(size=8), rng.normal(size=8)
    assert cost(phi, beta) == pytest.approx(0.5 * np.dot(phi, beta) ** 2, rel=1e-15)


def test_gradient_examples(geom, beta_true, rng):
    q = rng.uniform(-2, 2, geom.n_links)
    from wipcom import feature_vector, solve_balance_angle
    q[0] = solve_balance_angle(geom, q, beta_true)
    phi = feature_vector(geom, q)
    np.testing.assert_allclose(gradient(phi, beta_true), 0.0, atol=1e-12)
    g = gradient(phi, perturb(beta_true, 0.2, 1))
    assert np.all(g[1::4] == 0.0)


def test_gradient_matches_finite_differences(rng):
    for _ in range(20):
        phi = rng.normal(size=28) * 0.03
        beta = rng.normal(size=28) * 10
        ref = fd_gradient(phi, beta)
        assert np.linalg.norm(gradient(phi, beta) - ref) <= 1e-6 * np.linalg.norm(ref)


def test_update_closed_form():
    cfg = LearningConfig(eta=0.5)
    out = update(np.array([2.0, 1.0, -1.0]), np.array([1.0, 0.0, 0.0]), cfg)
    np.testing.assert_array_equal(out, [2.0 * (1 - 0.5), 1.0, -1.0])


def test_update_contraction_and_projection(geom, beta_true, rng):
    cfg = LearningConfig(eta=200.0)
    from wipcom import feature_vector
    beta = perturb(beta_true, 0.2, 3)
    phi = feature_vector(geom, rng.uniform(-2, 2, geom.n_links))
    post = phi @ update(beta, phi, cfg)
    assert abs(post) == pytest.approx(abs(1 - 200.0 * phi @ phi) * abs(phi @ beta), rel=1e-12)
    proj = LearningConfig(eta=200.0, project=True, total_mass=geom.total_mass)
    assert masses(update(beta, phi, proj)).sum() == pytest.approx(geom.total_mass, rel=1e-12)


def test_update_warns_without_contraction():
    with pytest.warns(RuntimeWarning):
        update(np.ones(2), np.array([1.0, 1.0]), LearningConfig(eta=1.5))


def test_config_validation():
    for kw in ({"eta": 0}, {"x_tol": -1}, {"n_consecutive": 0}, {"project": True}):
        with pytest.raises(InvalidParameterError):
            LearningConfig(**kw)


def test_fit_from_truth_stops_after_nc(geom, beta_true):
    pool = generate_pool(geom, beta_true, 50, seed=1)
    res = fit(beta_true, pool.features, LearningConfig())
    assert res.stop_reason == "converged"
    assert len(res.trace) == 10
    np.testing.assert_allclose(res.beta, beta_true, rtol=0, atol=1e-12)


def test_fit_single_pose_geometric_decay(geom, beta_true):
    pool = generate_pool(geom, beta_true, 1, seed=2)
    phi = pool.features[:, 0]
    cfg = LearningConfig(eta=200.0, early_stop=False)
    beta0 = perturb(beta_true, 0.2, 4)
    res = fit(beta0, np.tile(phi[:, None], (1, 30)), cfg)
    ratio = 1 - cfg.eta * phi @ phi
    expected = (phi @ beta0) * ratio ** np.arange(30)
    np.testing.assert_allclose(res.trace.error_pre, expected, rtol=1e-9, atol=1e-18)


def test_fit_trace_identity_and_frozen_components(geom, beta_true):
    pool = generate_pool(geom, beta_true, 300, seed=3)
    cfg = LearningConfig(eta=200.0)
    beta0 = perturb(beta_true, 0.2, 5)
    res = fit(beta0, pool.features, cfg, checkpoint_every=1)
    tr = res.trace
    gains = 1 - cfg.eta * np.sum(pool.features[:, :len(tr)] ** 2, axis=0)
    np.testing.assert_allclose(tr.error_post, gains * tr.error_pre, rtol=1e-12, atol=1e-15)
    assert np.all(np.abs(tr.error_post) < np.abs(tr.error_pre))
    np.testing.assert_array_equal(res.beta[1::4], beta0[1::4])
    np.testing.assert_array_equal(tr.iterations, np.arange(1, len(tr) + 1))
    assert len(res.checkpoints) == len(tr) + 1
    assert len(set(tr.beta_hashes)) == len(tr)


def test_fit_projection_keeps_mass_sum(geom, beta_true):
    pool = generate_pool(geom, beta_true, 100, seed=4)
    cfg = LearningConfig(project=True, total_mass=geom.total_mass, early_stop=False)
    res = fit(perturb(beta_true, 0.2, 6), pool.features, cfg)
    np.testing.assert_allclose(res.trace.mass_sum, geom.total_mass, rtol=1e-9)


def test_fit_reduces_held_out_error(geom, beta_true):
    train = generate_pool(geom, beta_true, 400, seed=5).features
    test = generate_pool(geom, beta_true, 100, seed=6).features
    beta0 = perturb(beta_true, 0.2, 7)
    res = fit(beta0, train, LearningConfig(early_stop=False))
    assert np.abs(test.T @ res.beta).mean() < 0.2 * np.abs(test.T @ beta0).mean()
    # errors vanish without recovering the individual components
    assert np.linalg.norm(res.beta - beta_true) > 0


def test_fit_divergence_guard(geom, beta_true):
    pool = generate_pool(geom, beta_true, 200, seed=7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(LearningDivergedError):
            fit(perturb(beta_true, 0.2, 8), pool.features, LearningConfig(eta=5000.0))


def test_fit_stream_exhausted_and_max_iterations(geom, beta_true):
    pool = generate_pool(geom, beta_true, 20, seed=8)
    beta0 = perturb(beta_true, 0.5, 9)
    assert fit(beta0, pool.features, LearningConfig(x_tol=1e-9)).stop_reason == "stream_exhausted"
    res = fit(beta0, pool.features, LearningConfig(x_tol=1e-9, max_iterations=5))
    assert res.stop_reason == "max_iterations" and len(res.trace) == 5
    with pytest.raises(InvalidParameterError):
        fit(beta0, np.empty((28, 0)), LearningConfig())


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_property_gradient_fd(seed):
    rng = np.random.default_rng(seed)
    n = 4 * int(rng.integers(1, 9))
    phi = rng.normal(size=n) * rng.uniform(1e-3, 1)
    beta = rng.normal(size=n) * rng.uniform(0.1, 100)
    ref = fd_gradient(phi, beta)
    assert np.linalg.norm(gradient(phi, beta) - ref) <= 1e-6 * max(np.linalg.norm(ref), 1e-300) + 1e-12
