"""
Learning the mass model from balanced poses
===========================================

Every pose the robot balances in is a free measurement: the true CoM is over
the axle, so whatever the model predicts is pure error. One gradient step
per pose drives that error down.
"""

import numpy as np

from wipcom import LearningConfig, default_geometry, fit, generate_pool, make_default_truth
from wipcom import perturb

geom = default_geometry()
beta_true = make_default_truth(geom)
stream = generate_pool(geom, beta_true, 600, seed=1)
test = generate_pool(geom, beta_true, 200, seed=2)

beta0 = perturb(beta_true, 0.2, rng=3)
print("link masses, truth :", beta_true[3::4])
print("link masses, start :", beta0[3::4].round(2))

res = fit(beta0, stream.features, LearningConfig(early_stop=False), checkpoint_every=100)
for k, b in enumerate(res.checkpoints):
    err = np.abs(test.features.T @ b)
    print(f"after {100 * k:3d} poses: mean {err.mean() * 1e3:6.2f} mm, max {err.max() * 1e3:6.2f} mm")

# predictions are right, yet the parameters need not be
print("link masses, final :", res.beta[3::4].round(2))

# the usual stopping rule: N quiet poses in a row
short = fit(beta0, stream.features, LearningConfig())
print(f"early stop after {len(short.trace)} poses ({short.stop_reason})")
