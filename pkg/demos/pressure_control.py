"""Antagonistic pressure control: how p_A trades stiffness for air.

Run with ``python demos/pressure_control.py``.
"""

import numpy as np

from umarm.actuation import joint_stiffness, ratio_to_pressures
from umarm.config import load_config
from umarm.experiments import ExperimentSpec, oscillation_frequency, run_step_response

cfg = load_config()
base_joint = cfg.joints[0]

# Co-contraction makes the joint stiffer and its free oscillation faster.
print("p [kPa]   k [N m/rad]   f [Hz]")
for p in (0.0, 14.0, 28.0, 55.0, 83.0, 276.0):
    k = joint_stiffness(base_joint, 0.0, p, p)
    f = oscillation_frequency(cfg, p)
    print(f"{p:7.0f}   {k:11.3f}   {f:6.2f}")

# The controller outputs log(p1/p2); the weaker side always holds p_A.
for ratio in (0.25, 1.0, 3.0, 10.0):
    p1, p2, clamped = ratio_to_pressures(ratio, 55.0)
    print(f"ratio {ratio:5.2f} -> p1 {p1:6.1f}  p2 {p2:6.1f}  clamped={clamped}")

# Step responses for the three profiles.
for name in ("high-aggressive", "low-aggressive", "low-conservative"):
    r = run_step_response(cfg, ExperimentSpec("step_response", profile=name))
    print(r.summary())
