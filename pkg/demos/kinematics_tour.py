"""Forward kinematics, Jacobians and IK on the default arm.

Run with ``python demos/kinematics_tour.py``.
"""

import numpy as np

from umarm.arm import N_JOINTS, position_jacobian, robot_fk, tip_position
from umarm.config import load_config
from umarm.ik import IkParams, solve_position_ik

np.set_printoptions(precision=4, suppress=True)
cfg = load_config()
arm = cfg.arm

# At rest the arm hangs straight down.
print("rest tip:", tip_position(arm, np.zeros(N_JOINTS)))
print("kinematic length:", arm.kinematic_length, "m")

# Bend the base U-joint and the first 45-degree joint.
theta = np.zeros(N_JOINTS)
theta[[0, 2]] = np.deg2rad([8.0, -5.0])
g = robot_fk(arm, theta)
print("bent tip:", g.translation)
print("tool rotation:\n", g.rotation)

# Position Jacobian: 3 x 12, rank 3 away from singular postures.
J = position_jacobian(arm, theta)
print("Jacobian singular values:", np.linalg.svd(J, compute_uv=False))

# Solve for a point on one of the waypoint squares.
target = cfg.waypoints[0]
res = solve_position_ik(arm, np.zeros(N_JOINTS), target, cfg.ik)
print(f"IK: converged={res.converged} in {res.iterations} iterations, residual {res.residual * 1e3:.3f} mm")
print("joint angles (deg):", np.degrees(res.theta))

# The null-space term keeps joints nearer the middle of their range on
# average; any single target can go either way.
rng = np.random.default_rng(0)
targets = [tip_position(arm, rng.uniform(arm.limits.lower, arm.limits.upper)) for _ in range(50)]
for k0 in (cfg.ik.null_gain, 0.0):
    params = IkParams(null_gain=k0)
    worst = [np.abs(solve_position_ik(arm, np.zeros(N_JOINTS), p, params).theta).max() for p in targets]
    print(f"k0 = {k0}: mean max |theta| {np.degrees(np.mean(worst)):.3f} deg")
