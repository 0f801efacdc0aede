"""
Choosing informative poses
==========================

With an ensemble of plausible wrong models, pick the pose where they are
collectively most wrong, learn from it, and repeat. Compare against taking
poses in random order under the same stopping rule.
"""

import numpy as np

from wipcom import default_geometry, filter_poses, generate_ensemble, generate_pool
from wipcom import make_default_truth, random_baseline

geom = default_geometry()
beta_true = make_default_truth(geom)
pool = generate_pool(geom, beta_true, 2000, seed=10)
ens = generate_ensemble(beta_true, 100, 0.02, geom, seed=11)
print(f"pool acceptance rate {pool.acceptance_rate:.2f}; ensemble error "
      f"{ens.probe_errors.mean() * 100:.2f} +- {ens.probe_errors.std() * 100:.2f} cm")

greedy = filter_poses(pool, ens.betas, eta=200.0, x_tol=2e-3, n_consecutive=10)
random = random_baseline(pool, ens.betas, eta=200.0, x_tol=2e-3, n_consecutive=10, seed=12)
print(f"greedy: {len(greedy)} poses ({greedy.status})")
print(f"random: {len(random)} poses ({random.status})")

# max ensemble error at selection time, every 25 poses
for k in range(0, len(greedy), 25):
    print(f"  pose {k:3d}: max error {greedy.max_errors[k] * 1e3:6.2f} mm")

# how well does each finished ensemble predict poses it never saw?
unseen = np.setdiff1d(np.arange(len(pool)), np.union1d(greedy.indices, random.indices))
for name, res in (("greedy", greedy), ("random", random)):
    err = np.abs(pool.features[:, unseen].T @ res.betas)
    print(f"{name} ensemble on unseen poses: mean {err.mean() * 1e3:.2f} mm, max {err.max() * 1e3:.2f} mm")
