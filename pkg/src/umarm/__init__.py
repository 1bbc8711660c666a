"""Kinematics, antagonistic pressure control and a plant simulator for a
twelve-joint pneumatic arm built from three U-joint segments.

Modules:
    spatial      rigid-body transforms, twists, exponential map
    arm          geometry, forward kinematics, Jacobians, U-joint angle extraction
    ik           damped weighted least-norm position IK with limit avoidance
    actuation    McKibben model, antagonistic joints, PID pressure control, compliance
    plant        fixed-step arm/valve/tank simulator
    experiments  closed-loop experiment harness and metrics
    config       YAML configuration loader
"""

__version__ = "0.1.0"

from .arm import ArmGeometry, robot_fk, spatial_jacobian, tip_position
from .config import Config, load_config
from .errors import (
    ConfigError,
    ExperimentError,
    ExtractionError,
    InputError,
    InvalidPoseError,
    InvalidTwistError,
    RangeError,
    SimulationFault,
    UMArmError,
)
from .ik import IkParams, solve_position_ik
from .spatial import Pose, Twist, exp_twist

__all__ = [
    "ArmGeometry",
    "Config",
    "ConfigError",
    "ExperimentError",
    "ExtractionError",
    "IkParams",
    "InputError",
    "InvalidPoseError",
    "InvalidTwistError",
    "Pose",
    "RangeError",
    "SimulationFault",
    "Twist",
    "UMArmError",
    "exp_twist",
    "load_config",
    "robot_fk",
    "solve_position_ik",
    "spatial_jacobian",
    "tip_position",
]
