"""Online center-of-mass identification for a wheeled inverted pendulum humanoid.

A planar n-link chain balances on two wheels under ADRC while its mass model
is refined by gradient descent from balanced poses, with a greedy filter that
picks the most informative poses first.
"""

from .adrc import (
    AdrcController,
    BalanceResult,
    ControllerConfig,
    EsoState,
    LqrGains,
    adrc_torque,
    balance_run,
    care_residual,
    eso_gains,
    eso_step,
    lqr_gains,
    solve_care,
)
from .errors import *  # noqa: F401,F403
from .kinematics import (
    ChainGeometry,
    ComCoordinates,
    com_of,
    default_geometry,
    feature_matrix,
    feature_vector,
    forward_transforms,
    sample_balanced_poses,
    solve_balance_angle,
)
from .learner import FitResult, LearningConfig, LearningTrace, cost, fit, gradient, update
from .mass_model import (
    BetaEnsemble,
    generate_ensemble,
    make_default_truth,
    make_truth,
    perturb,
    probe_error,
    project_mass_sum,
)
from .metalearn import FilteredPoses, PosePool, filter_poses, generate_pool, random_baseline, select_next
from .plant import AggregateBody, Linearization, WheelParams, WipPlant, aggregate, linearize, rk4_step

__version__ = "0.1.0"
