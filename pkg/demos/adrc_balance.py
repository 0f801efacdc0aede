"""
Balancing with a wrong mass model
=================================

The plant runs the true body while the controller is built from an estimate
whose CoM is off by a couple of centimetres. The extended state observers
absorb the mismatch as a disturbance, and the robot still comes to rest with
its true CoM over the axle. Better estimates need less torque.
"""

import numpy as np

from wipcom import balance_run, default_geometry, generate_ensemble, generate_pool
from wipcom import make_default_truth

geom = default_geometry()
beta_true = make_default_truth(geom)
pose = generate_pool(geom, beta_true, 1, seed=4).poses[0]
wrong = generate_ensemble(beta_true, 1, 0.02, geom, seed=4)
beta_est = wrong.betas[:, 0]
print(f"estimate's mean CoM error over probe poses: {wrong.probe_errors[0] * 100:.2f} cm")

res = balance_run(geom, beta_true, beta_est, pose, duration=40.0)
print(f"settled after {res.settle_time:.1f} s")
print(f"believed balance angle {res.believed_balance_angle:+.4f} rad")
print(f"true balance angle     {res.true_balance_angle:+.4f} rad")
print(f"reached pitch          {res.settled_pose[0]:+.4f} rad, true x_com {res.final_x_com:.1e} m")
print(f"peak wheel torque      {res.peak_torque:.2f} N m")

# the observer's disturbance estimate settles to a constant offset
t, fhat = res.trace[:, 0], res.trace[:, 7]
print("f_theta estimate at t = 0.1, 1, 10 s:", np.interp([0.1, 1, 10], t, fhat).round(3))

# shrinking the model error shrinks the torque needed
for scale in (2.0, 1.0, 0.5, 0.1):
    b = beta_true + scale * (beta_est - beta_true)
    peak = balance_run(geom, beta_true, b, pose, duration=40.0).peak_torque
    print(f"error x{scale:<4} peak torque {peak:6.2f} N m")
