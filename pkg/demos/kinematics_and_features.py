"""
Forward kinematics, features and the balance angle
==================================================

The CoM x-coordinate of a locked pose is linear in the mass parameters,
``x_com = phi(q) @ beta``. This script builds the default 7-link chain,
checks that identity against a direct summation, and finds the base pitch
that puts the CoM over the axle.
"""

import numpy as np

from wipcom import com_of, default_geometry, feature_vector, forward_transforms
from wipcom import make_default_truth, solve_balance_angle
from wipcom.kinematics import link_coms

geom = default_geometry()
beta = make_default_truth(geom)
print("links:", geom.n_links, " total mass:", geom.total_mass, "kg")

# a random pose inside the joint limits
rng = np.random.default_rng(0)
q = rng.uniform(geom.joint_lower, geom.joint_upper)
T = forward_transforms(geom, q)
print("frame 7 origin (x, z):", T[-1][[0, 2], 3].round(3))

# linear model against direct mass-weighted summation
phi = feature_vector(geom, q)
world, m = link_coms(geom, q, beta)
print("phi @ beta       :", phi @ beta)
print("direct summation :", m @ world[:, 0] / m.sum())

# y-entries of every feature block are exactly zero in the planar chain
print("y entries of phi :", phi[1::4])

# tilt the base until the CoM sits over the axle
q[0] = solve_balance_angle(geom, q, beta)
print("balanced q1      :", q[0])
print("x_com afterwards :", com_of(geom, q, beta).x)
