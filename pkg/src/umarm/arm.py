"""Geometry and kinematics of the three-segment, twelve-joint arm.

Each segment is upper plate -> U-joint -> central rod -> U-joint -> lower
plate.  A U-joint is two perpendicular revolute axes meeting at one point;
the lower U-joint's axes are turned 45 degrees about the segment axis
relative to the upper one.  At zero angles the whole arm hangs along -z
from the base frame, which sits at the first U-joint center.

Joint ordering is base to tip: joints 0-3 belong to segment 1, 4-7 to
segment 2 and 8-11 to segment 3.  Within a U-joint the first axis is the
one fixed to the parent link.

The default dimensions are placeholders; nothing in the test suite relies
on their exact values because every reference result is generated from
the forward kinematics itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ExtractionError
from .spatial import Pose, Twist, compose, exp_twist, hat, inverse, rodrigues

N_SEGMENTS = 3
JOINTS_PER_SEGMENT = 4
N_JOINTS = N_SEGMENTS * JOINTS_PER_SEGMENT
JOINT_LIMIT = np.deg2rad(15.0)
GRAVITY = 9.81
DOWN = np.array([0.0, 0.0, -1.0])


@dataclass(frozen=True)
class JointLimits:
    lower: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, -JOINT_LIMIT))
    upper: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, JOINT_LIMIT))

    def __post_init__(self):
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (N_JOINTS,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (N_JOINTS,)).copy()
        if np.any(lo >= hi):
            raise ConfigError("joint limits need lower < upper for every joint")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, limit=JOINT_LIMIT):
        return cls(np.full(N_JOINTS, -limit), np.full(N_JOINTS, limit))

    @property
    def mid(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def range(self):
        return self.upper - self.lower

    @property
    def half_range(self):
        return 0.5 * (self.upper - self.lower)

    def clip(self, theta):
        return np.clip(theta, self.lower, self.upper)

    def contains(self, theta, tol=0.0):
        theta = np.asarray(theta)
        return bool(np.all(theta >= self.lower - tol) and np.all(theta <= self.upper + tol))


@dataclass(frozen=True)
class UJoint:
    """Two perpendicular revolute axes through a common center."""

    axis_a: np.ndarray
    axis_b: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        for name in ("axis_a", "axis_b", "center"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        a, b = self.axis_a, self.axis_b
        if abs(np.linalg.norm(a) - 1) > 1e-9 or abs(np.linalg.norm(b) - 1) > 1e-9:
            raise ConfigError("U-joint axes must be unit vectors")
        if abs(a @ b) > 1e-9:
            raise ConfigError("U-joint axes must be perpendicular")

    @property
    def twists(self):
        return Twist.revolute(self.axis_a, self.center), Twist.revolute(self.axis_b, self.center)


@dataclass(frozen=True)
class SegmentGeometry:
    """One spine segment, expressed in its own base frame (upper U-joint center).

    ``joint_axes`` and ``joint_centers`` are ``(4, 3)`` arrays; rows 0-1 form
    the upper U-joint and rows 2-3 the lower one.
    """

    joint_centers: np.ndarray
    joint_axes: np.ndarray
    rest_tool_pose: Pose
    upper_plate_half_height: float
    rod_length: float
    lower_plate_half_height: float
    lever_arm_radius: float
    actuator_rest_length: float

    @classmethod
    def build(
        cls,
        rod_length=0.060,
        upper_plate_half_height=0.0125,
        lower_plate_half_height=0.0125,
        lever_arm_radius=0.030,
        actuator_rest_length=0.053,
        group_offset=np.pi / 4,
    ):
        c, s = np.cos(group_offset), np.sin(group_offset)
        axes = np.array(
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [c, s, 0.0], [-s, c, 0.0]],
        )
        centers = np.array(
            [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -rod_length], [0.0, 0.0, -rod_length]]
        )
        return cls(
            joint_centers=centers,
            joint_axes=axes,
            rest_tool_pose=Pose.from_translation([0.0, 0.0, -rod_length]),
            upper_plate_half_height=upper_plate_half_height,
            rod_length=rod_length,
            lower_plate_half_height=lower_plate_half_height,
            lever_arm_radius=lever_arm_radius,
            actuator_rest_length=actuator_rest_length,
        )

    @property
    def twists(self):
        return [Twist.revolute(w, q) for w, q in zip(self.joint_axes, self.joint_centers)]

    def ujoint(self, k):
        """Upper (``k=0``) or lower (``k=1``) U-joint of the segment."""
        i = 2 * k
        return UJoint(self.joint_axes[i], self.joint_axes[i + 1], self.joint_centers[i])


@dataclass(frozen=True)
class LumpedMass:
    mass: float
    rest_position: np.ndarray  # in the robot base frame, arm at rest
    parent_joint: int  # last joint proximal to the mass; -1 means fixed to the base


class ArmGeometry:
    """Full arm: three segments, two inter-segment offsets and lumped masses.

    Kinematic quantities needed in inner loops (global joint axes and
    points at rest, the rest tool pose) are precomputed at construction.
    Instances are treated as immutable.
    """

    def __init__(
        self,
        segments,
        offsets=None,
        end_effector=None,
        mass_fractions=(0.30, 0.35, 0.35),
        total_mass=1.15,
        base_segment_scale=1.3,
        limits=None,
    ):
        segments = list(segments)
        if len(segments) != N_SEGMENTS:
            raise ConfigError(f"expected {N_SEGMENTS} segments, got {len(segments)}")
        if offsets is None:
            offsets = [
                Pose.from_translation(
                    [0.0, 0.0, -(a.lower_plate_half_height + b.upper_plate_half_height)]
                )
                for a, b in zip(segments[:-1], segments[1:])
            ]
        if len(offsets) != N_SEGMENTS - 1:
            raise ConfigError("expected two inter-segment offsets")
        if total_mass <= 0 or any(f <= 0 for f in mass_fractions):
            raise ConfigError("masses must be positive")
        self.segments = tuple(segments)
        self.offsets = tuple(offsets)
        self.end_effector = end_effector if end_effector is not None else Pose.identity()
        self.total_mass = float(total_mass)
        self.mass_fractions = tuple(float(f) for f in mass_fractions)
        self.base_segment_scale = float(base_segment_scale)
        self.limits = limits if limits is not None else JointLimits()
        self._precompute()

    @classmethod
    def default(cls, **kwargs):
        return cls([SegmentGeometry.build() for _ in range(N_SEGMENTS)], **kwargs)

    def _precompute(self):
        # Base pose of every segment at rest, in the robot frame.
        bases = [Pose.identity()]
        for seg, H in zip(self.segments[:-1], self.offsets):
            bases.append(bases[-1] @ seg.rest_tool_pose @ H)
        self.segment_bases = tuple(bases)
        self.rest_tool_pose = bases[-1] @ self.segments[-1].rest_tool_pose @ self.end_effector

        axes, points = [], []
        for base, seg in zip(bases, self.segments):
            axes.append(seg.joint_axes @ base.rotation.T)
            points.append(base.apply(seg.joint_centers))
        self.axes = np.vstack(axes)
        self.points = np.vstack(points)
        self.twists = np.hstack([-np.cross(self.axes, self.points), self.axes])
        for a in (self.axes, self.points, self.twists):
            a.setflags(write=False)

        frac = np.asarray(self.mass_fractions)
        per_segment = self.total_mass / N_SEGMENTS * frac / frac.sum()
        masses = []
        for s, (base, seg) in enumerate(zip(bases, self.segments)):
            j0 = JOINTS_PER_SEGMENT * s
            local = [
                (per_segment[0], [0, 0, seg.upper_plate_half_height], j0 - 1),
                (per_segment[1], [0, 0, -0.5 * seg.rod_length], j0 + 1),
                (per_segment[2], [0, 0, -seg.rod_length - seg.lower_plate_half_height], j0 + 3),
            ]
            for m, pos, parent in local:
                masses.append(LumpedMass(m, base.apply(np.array(pos, dtype=float)), parent))
        self.masses = tuple(masses)

    @property
    def lever_arms(self):
        """Actuator lever radius per joint, with the base segment scaled up."""
        r = []
        for s, seg in enumerate(self.segments):
            scale = self.base_segment_scale if s == 0 else 1.0
            r.extend([seg.lever_arm_radius * scale] * JOINTS_PER_SEGMENT)
        return np.array(r)

    @property
    def kinematic_length(self):
        """Sum of all rigid offsets along the chain; bounds the reach from the base."""
        links = [seg.rest_tool_pose for seg in self.segments] + list(self.offsets) + [self.end_effector]
        return float(sum(np.linalg.norm(g.translation) for g in links))

    def ujoint(self, index):
        """U-joint ``index`` (0-5) expressed in the robot base frame at rest."""
        i = 2 * index
        return UJoint(self.axes[i], self.axes[i + 1], self.points[i])


def segment_fk(geom, theta):
    """Tool pose of one segment in its base frame, product of exponentials."""
    g = Pose.identity()
    for xi, t in zip(geom.twists, theta):
        g = compose(g, exp_twist(xi, t))
    return compose(g, geom.rest_tool_pose)


def robot_fk(arm, theta):
    """End-effector pose in the robot base frame.

    Segments are chained base to tip: seg1 * H12 * seg2 * H23 * seg3, then
    the end-effector offset (identity by default).
    """
    theta = np.asarray(theta, dtype=float)
    g = Pose.identity()
    for s, seg in enumerate(arm.segments):
        g = compose(g, segment_fk(seg, theta[4 * s : 4 * s + 4]))
        if s < N_SEGMENTS - 1:
            g = compose(g, arm.offsets[s])
    return compose(g, arm.end_effector)


def _rotations(axes, theta):
    # Batched Rodrigues; joint angles here are far from the series branch
    # except exactly at zero, where the closed form is exact anyway.
    s = np.sin(theta)[:, None, None]
    c = (2.0 * np.sin(0.5 * theta) ** 2)[:, None, None]
    x, y, z = axes[:, 0], axes[:, 1], axes[:, 2]
    zero = np.zeros_like(x)
    K = np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=1,
    )
    return np.eye(3) + s * K + c * (K @ K)


def joint_frames(arm, theta):
    """Cumulative joint transforms for the whole chain.

    Returns ``(R, t)`` with shapes ``(13, 3, 3)`` and ``(13, 3)``: entry
    ``k`` is the product of the first ``k`` joint exponentials, so entry 0
    is the identity and entry 12 maps rest-posture tip points to their
    current location.
    """
    theta = np.asarray(theta, dtype=float)
    E = _rotations(arm.axes, theta)
    # Translation of exp(xi*theta) for a revolute joint through q: (I - R) q.
    te = arm.points - np.einsum("nij,nj->ni", E, arm.points)
    R = np.empty((N_JOINTS + 1, 3, 3))
    t = np.empty((N_JOINTS + 1, 3))
    R[0] = np.eye(3)
    t[0] = 0.0
    for i in range(N_JOINTS):
        R[i + 1] = R[i] @ E[i]
        t[i + 1] = R[i] @ te[i] + t[i]
    return R, t


def current_axes(arm, R, t):
    """World axes and axis points of every joint for cumulative frames ``(R, t)``."""
    w = np.einsum("nij,nj->ni", R[:-1], arm.axes)
    q = np.einsum("nij,nj->ni", R[:-1], arm.points) + t[:-1]
    return w, q


def tip_position(arm, theta):
    R, t = joint_frames(arm, theta)
    return R[-1] @ arm.rest_tool_pose.translation + t[-1]


def spatial_jacobian(arm, theta):
    """6x12 spatial Jacobian; column ``i`` is joint ``i``'s current twist (v, w)."""
    R, t = joint_frames(arm, theta)
    w, q = current_axes(arm, R, t)
    return np.vstack([-np.cross(w, q).T, w.T])


def position_jacobian(arm, theta):
    """3x12 Jacobian of the end-effector position: ``p_dot = J_p @ theta_dot``."""
    R, t = joint_frames(arm, theta)
    w, q = current_axes(arm, R, t)
    p = R[-1] @ arm.rest_tool_pose.translation + t[-1]
    return np.cross(w, p - q).T


def position_and_jacobian(arm, theta):
    R, t = joint_frames(arm, theta)
    w, q = current_axes(arm, R, t)
    p = R[-1] @ arm.rest_tool_pose.translation + t[-1]
    return p, np.cross(w, p - q).T


def ujoint_rotation(ujoint, theta_a, theta_b):
    return rodrigues(ujoint.axis_a, theta_a) @ rodrigues(ujoint.axis_b, theta_b)


def joint_angles_from_frames(parent, child, ujoint, rest=None, tol=1e-6):
    """Recover the two U-joint angles from two tracked rigid-body poses.

    ``ujoint`` axes are expressed in the parent body's frame, and ``rest``
    is the child pose relative to the parent when both angles are zero
    (identity if omitted).  The relative rotation is factored as
    ``Rot(a, theta_a) @ Rot(b, theta_b)``.

    Raises:
        ExtractionError: when the factorization leaves a rotation residual
            above ``tol`` (e.g. a twist about the rod axis, which a U-joint
            cannot produce) or the angles reach the +-pi/2 gimbal limit.
    """
    rel = compose(inverse(parent), child)
    if rest is not None:
        rel = compose(rel, inverse(rest))
    Rrel = rel.rotation
    a, b = ujoint.axis_a, ujoint.axis_b
    c = np.cross(a, b)
    # Rot(a, ta) Rot(b, tb) b = Rot(a, ta) b = cos(ta) b + sin(ta) c
    Rb = Rrel @ b
    theta_a = np.arctan2(c @ Rb, b @ Rb)
    # R^T a = Rot(b, -tb) a = cos(tb) a + sin(tb) c
    Ra = Rrel.T @ a
    theta_b = np.arctan2(c @ Ra, a @ Ra)
    if abs(theta_a) >= np.pi / 2 or abs(theta_b) >= np.pi / 2:
        raise ExtractionError("U-joint angle at or beyond the gimbal limit", np.inf)
    residual = np.linalg.norm(ujoint_rotation(ujoint, theta_a, theta_b) - Rrel)
    if residual > tol:
        raise ExtractionError("relative rotation not reachable by the U-joint", residual)
    return float(theta_a), float(theta_b)


def link_poses(arm, theta):
    """World poses of the six tracked links (rod and lower plate of each segment).

    These play the role of motion-capture rigid bodies; link ``k`` is the
    child of U-joint ``k``.  The frames coincide with the base frame at
    rest, so the ``rest`` argument of :func:`joint_angles_from_frames` is
    the identity for all of them.
    """
    R, t = joint_frames(arm, theta)
    return [Pose(R[2 * k + 2], t[2 * k + 2]) for k in range(2 * N_SEGMENTS)]


def angles_from_link_poses(arm, poses, tol=1e-6):
    """Invert :func:`link_poses`: twelve joint angles from six link poses."""
    theta = np.empty(N_JOINTS)
    parent = Pose.identity()
    for k, child in enumerate(poses):
        # Joint axes of U-joint k in the parent link frame equal the rest
        # world axes, since every link frame coincides with the base at rest.
        uj = arm.ujoint(k)
        theta[2 * k], theta[2 * k + 1] = joint_angles_from_frames(parent, child, uj, tol=tol)
        parent = child
    return theta


__all__ = [
    "JointLimits",
    "UJoint",
    "SegmentGeometry",
    "ArmGeometry",
    "LumpedMass",
    "segment_fk",
    "robot_fk",
    "joint_frames",
    "tip_position",
    "spatial_jacobian",
    "position_jacobian",
    "position_and_jacobian",
    "joint_angles_from_frames",
    "ujoint_rotation",
    "link_poses",
    "angles_from_link_poses",
    "hat",
]
