"""McKibben actuators, antagonistic joints and the joint pressure controller.

Pressures are gauge kPa throughout.  Each joint is driven by two
actuators: side 1 pulls the joint toward positive angles, side 2 toward
negative ones.  Actuator ``2*i`` is side 1 of joint ``i`` and ``2*i + 1``
is side 2.

Force model: ``F = a * p * (L / L0 - (1 - eps_max))``.  It is linear in
pressure, vanishes at full contraction ``L = L0 (1 - eps_max)`` and grows
as the muscle is stretched toward its slack length ``L0``.

Joint geometry (planar, per joint): the parent attachment sits at
``(r + Lr sin(phi), Lr cos(phi))`` and the child attachment at ``(r, 0)``
in joint coordinates, so at zero angle the muscle has its installed length
``Lr`` and leans toward the joint center by ``phi``.  Side 2 is the mirror
image.  The installed length is shorter than ``L0``, leaving room for the
stretched side to lengthen.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .arm import N_JOINTS, JOINTS_PER_SEGMENT, JOINT_LIMIT, position_jacobian
from .errors import InputError, RangeError

MAX_PRESSURE = 276.0  # kPa, regulated supply line


@dataclass(frozen=True)
class McKibbenParams:
    rest_length: float = 0.065
    max_contraction: float = 0.34
    force_gain: float = 1.5  # N/kPa
    min_pressure: float = 0.0
    max_pressure: float = MAX_PRESSURE

    def __post_init__(self):
        if not 0.0 < self.max_contraction < 1.0:
            raise InputError("max_contraction must lie in (0, 1)")
        if self.rest_length <= 0 or self.force_gain <= 0:
            raise InputError("rest_length and force_gain must be positive")

    @property
    def a(self):
        return self.force_gain

    @property
    def b(self):
        # Chosen so that the force vanishes at full contraction.
        return -self.force_gain * (1.0 - self.max_contraction)

    @property
    def min_length(self):
        return self.rest_length * (1.0 - self.max_contraction)

    def scaled(self, factor):
        return McKibbenParams(
            self.rest_length, self.max_contraction, self.force_gain * factor,
            self.min_pressure, self.max_pressure,
        )


def mckibben_force(params, p, length):
    """Tensile force (N) of a McKibben muscle at pressure ``p`` and ``length``.

    Raises:
        InputError: pressure outside ``[min_pressure, max_pressure]``.
        RangeError: length outside ``[L0 (1 - eps_max), L0]``.
    """
    if not params.min_pressure <= p <= params.max_pressure:
        raise InputError(f"pressure {p} kPa outside [{params.min_pressure}, {params.max_pressure}]")
    tol = 1e-12 * params.rest_length
    if not params.min_length - tol <= length <= params.rest_length + tol:
        raise RangeError(
            f"length {length:.6g} m outside contraction range "
            f"[{params.min_length:.6g}, {params.rest_length:.6g}]"
        )
    return max(0.0, p * (params.a * length / params.rest_length + params.b))


@dataclass(frozen=True)
class AntagonisticJoint:
    lever_arm: float = 0.030
    actuator_1: McKibbenParams = field(default_factory=McKibbenParams)
    actuator_2: McKibbenParams = field(default_factory=McKibbenParams)
    attachment_angle: float = np.deg2rad(10.0)
    installed_length: float = 0.053

    def __post_init__(self):
        if self.lever_arm <= 0:
            raise InputError("lever arm must be positive")

    def attachments(self):
        """``(Ax, Ay, bx, by)``: side-1 parent and child anchor points."""
        Lr, phi, r = self.installed_length, self.attachment_angle, self.lever_arm
        return r + Lr * np.sin(phi), Lr * np.cos(phi), r, 0.0

    def actuator(self, side):
        return self.actuator_1 if side == 1 else self.actuator_2


@njit(cache=True)
def _length_derivs(theta, Ax, Ay, bx, by):
    # Squared anchor distance is |A|^2 + |B|^2 - 2 (cos P + sin Q).
    P = Ax * bx + Ay * by
    Q = Ay * bx - Ax * by
    c = np.cos(theta)
    s = np.sin(theta)
    f = Ax * Ax + Ay * Ay + bx * bx + by * by - 2.0 * (c * P + s * Q)
    L = np.sqrt(f)
    d1 = (s * P - c * Q) / L
    d2 = (c * P + s * Q - d1 * d1) / L
    return L, d1, d2


@njit(cache=True)
def _side_lengths(theta, Ax, Ay, bx, by):
    L1, d11, d12 = _length_derivs(theta, Ax, Ay, bx, by)
    # Side 2 mirrors side 1 across the joint's symmetry plane.
    L2, d21, d22 = _length_derivs(-theta, Ax, Ay, bx, by)
    return L1, d11, d12, L2, -d21, d22


@njit(cache=True)
def _force(p, L, gain, L0, eps):
    strain = L / L0 - (1.0 - eps)
    if strain <= 0.0:
        return 0.0, 0.0
    return gain * p * strain, gain * p / L0


@njit(cache=True)
def _torque_stiffness(theta, p1, p2, Ax, Ay, bx, by, g1, g2, L0, eps):
    L1, d1, dd1, L2, d2, dd2 = _side_lengths(theta, Ax, Ay, bx, by)
    F1, k1 = _force(p1, L1, g1, L0, eps)
    F2, k2 = _force(p2, L2, g2, L0, eps)
    tau = -F1 * d1 - F2 * d2
    stiff = k1 * d1 * d1 + F1 * dd1 + k2 * d2 * d2 + F2 * dd2
    return tau, stiff


def _joint_args(joint):
    a1, a2 = joint.actuator_1, joint.actuator_2
    return (*joint.attachments(), a1.force_gain, a2.force_gain, a1.rest_length, a1.max_contraction)


def actuator_length(joint, theta, side):
    """Anchor-to-anchor length of actuator ``side`` (1 or 2) at joint angle ``theta``."""
    L1, _, _, L2, _, _ = _side_lengths(float(theta), *joint.attachments())
    return L1 if side == 1 else L2


def actuator_length_rate(joint, theta, side):
    """Analytic ``dL/dtheta``; its negative is the actuator's moment arm."""
    _, d1, _, _, d2, _ = _side_lengths(float(theta), *joint.attachments())
    return d1 if side == 1 else d2


def _check_pressures(joint, p1, p2):
    for p, act in ((p1, joint.actuator_1), (p2, joint.actuator_2)):
        if not act.min_pressure <= p <= act.max_pressure:
            raise InputError(f"pressure {p} kPa outside [{act.min_pressure}, {act.max_pressure}]")


def pair_torque(joint, theta, p1, p2):
    """Net joint torque (N m) from the antagonistic pair; positive drives theta up.

    Each side contributes ``-F dL/dtheta`` (virtual work), which reduces to
    ``r_eff (F1 - F2)`` at the symmetric rest angle.  Beyond full
    contraction a muscle simply stops pulling.
    """
    _check_pressures(joint, p1, p2)
    tau, _ = _torque_stiffness(float(theta), float(p1), float(p2), *_joint_args(joint))
    return tau


def joint_stiffness(joint, theta, p1, p2):
    """Analytic ``-d(tau)/d(theta)`` at fixed pressures (N m / rad)."""
    _check_pressures(joint, p1, p2)
    _, k = _torque_stiffness(float(theta), float(p1), float(p2), *_joint_args(joint))
    return k


class JointBank:
    """Per-joint actuator parameters packed into arrays for the simulator."""

    def __init__(self, joints):
        joints = list(joints)
        if len(joints) != N_JOINTS:
            raise InputError(f"expected {N_JOINTS} joints")
        self.joints = tuple(joints)
        args = np.array([_joint_args(j) for j in joints], dtype=float)
        (self.Ax, self.Ay, self.bx, self.by, self.gain1, self.gain2,
         self.L0, self.eps) = (np.ascontiguousarray(args[:, k]) for k in range(8))
        self.max_pressure = np.array([j.actuator_1.max_pressure for j in joints])

    def torque_stiffness(self, theta, p1, p2):
        tau = np.empty(N_JOINTS)
        k = np.empty(N_JOINTS)
        for i in range(N_JOINTS):
            tau[i], k[i] = _torque_stiffness(
                theta[i], p1[i], p2[i], self.Ax[i], self.Ay[i], self.bx[i], self.by[i],
                self.gain1[i], self.gain2[i], self.L0[i], self.eps[i],
            )
        return tau, k


def build_joints(arm, muscle=None, base_force_scale=1.5, attachment_angle=np.deg2rad(10.0)):
    """Antagonistic joint models for all twelve joints of ``arm``.

    The base segment gets the longer lever arm from the geometry and
    larger-diameter muscles (force gain times ``base_force_scale``).
    """
    muscle = muscle if muscle is not None else McKibbenParams()
    lever = arm.lever_arms
    joints = []
    for i in range(N_JOINTS):
        seg = arm.segments[i // JOINTS_PER_SEGMENT]
        m = muscle.scaled(base_force_scale) if i < JOINTS_PER_SEGMENT else muscle
        joints.append(
            AntagonisticJoint(
                lever_arm=float(lever[i]), actuator_1=m, actuator_2=m,
                attachment_angle=attachment_angle,
                installed_length=seg.actuator_rest_length,
            )
        )
    return joints


# --- controller -----------------------------------------------------------


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float
    integral_clamp: float = 1.0
    output_clamp: float = 3.0

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise InputError("PID gains must be non-negative")


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float | None = None


def pid_step(state, error, dt, gains):
    """One controller tick; returns ``log(p1 / p2)`` and updates ``state``.

    The integral *term* ``ki * int(e dt)`` is clamped to
    ``+-integral_clamp``.  The derivative is skipped on the first tick.
    """
    if dt <= 0:
        raise InputError("dt must be positive")
    state.integral += error * dt
    if gains.ki > 0:
        lim = gains.integral_clamp / gains.ki
        state.integral = min(max(state.integral, -lim), lim)
    deriv = 0.0 if state.prev_error is None else (error - state.prev_error) / dt
    state.prev_error = error
    u = gains.kp * error + gains.ki * state.integral + gains.kd * deriv
    return min(max(u, -gains.output_clamp), gains.output_clamp)


class PressurePair(NamedTuple):
    p1: float
    p2: float
    clamped: bool


def ratio_to_pressures(p_ratio, p_A, max_p=MAX_PRESSURE):
    """Split a pressure ratio ``p1/p2`` into two pressures with floor ``p_A``.

    The lower-pressure side holds exactly ``p_A``; the other side is
    ``p_A * ratio`` (or ``p_A / ratio``) clipped to ``[0, max_p]``.  Works
    elementwise on arrays.
    """
    ratio = np.asarray(p_ratio, dtype=float)
    pa = np.asarray(p_A, dtype=float)
    if np.any(~(ratio > 0)):
        raise InputError("pressure ratio must be positive")
    if np.any(pa < 0) or np.any(pa > max_p):
        raise InputError(f"p_A must lie in [0, {max_p}] kPa")
    up = ratio >= 1.0
    raw = np.where(up, pa * ratio, pa / ratio)
    high = np.clip(raw, 0.0, max_p)
    p1 = np.where(up, high, pa)
    p2 = np.where(up, pa, high)
    clamped = raw > max_p
    if p1.ndim == 0:
        return PressurePair(float(p1), float(p2), bool(clamped))
    return PressurePair(p1, p2, clamped)


def derate_pA(p_A, theta_target, limit=JOINT_LIMIT, gamma=1.0):
    """Lower the antagonistic floor for targets far from center.

    Linear ramp to zero at the joint limit by default (``gamma = 1``).
    """
    scale = np.maximum(0.0, 1.0 - np.abs(theta_target) / limit) ** gamma
    return p_A * scale


class JointController:
    """Angle controller for a single joint: PID -> ratio -> pressure pair."""

    def __init__(self, gains, p_A, limit=JOINT_LIMIT, gamma=1.0, max_p=MAX_PRESSURE):
        self.gains = gains
        self.p_A = p_A
        self.limit = limit
        self.gamma = gamma
        self.max_p = max_p
        self.state = PidState()

    def update(self, target, measured, dt):
        u = pid_step(self.state, target - measured, dt, self.gains)
        floor = derate_pA(self.p_A, target, self.limit, self.gamma)
        return ratio_to_pressures(np.exp(u), floor, self.max_p)


class ArmController:
    """Twelve joint controllers ticked together.

    Same arithmetic as :class:`JointController`, with the per-joint PID
    states held in arrays.  ``update`` returns the 24 actuator targets
    ordered ``[j0 side1, j0 side2, j1 side1, ...]``.
    """

    def __init__(self, gains, p_A, limits=None, gamma=1.0, max_p=MAX_PRESSURE):
        gains = list(gains) if isinstance(gains, (list, tuple)) else [gains] * N_JOINTS
        if len(gains) != N_JOINTS:
            raise InputError(f"expected {N_JOINTS} gain sets")
        self.kp = np.array([g.kp for g in gains])
        self.ki = np.array([g.ki for g in gains])
        self.kd = np.array([g.kd for g in gains])
        self.output_clamp = np.array([g.output_clamp for g in gains])
        with np.errstate(divide="ignore"):
            self.integral_limit = np.where(
                self.ki > 0, np.array([g.integral_clamp for g in gains]) / self.ki, np.inf
            )
        self.p_A = np.broadcast_to(np.asarray(p_A, dtype=float), (N_JOINTS,)).copy()
        lim = JOINT_LIMIT if limits is None else limits.half_range
        self.limit = np.broadcast_to(np.asarray(lim, dtype=float), (N_JOINTS,)).copy()
        self.gamma = gamma
        self.max_p = max_p
        self.reset()

    def reset(self):
        self.integral = np.zeros(N_JOINTS)
        self.prev_error = None

    def update(self, targets, measured, dt):
        if dt <= 0:
            raise InputError("dt must be positive")
        e = np.asarray(targets, dtype=float) - np.asarray(measured, dtype=float)
        self.integral = np.clip(self.integral + e * dt, -self.integral_limit, self.integral_limit)
        deriv = 0.0 if self.prev_error is None else (e - self.prev_error) / dt
        self.prev_error = e
        u = self.kp * e + self.ki * self.integral + self.kd * deriv
        u = np.clip(u, -self.output_clamp, self.output_clamp)
        floor = derate_pA(self.p_A, targets, self.limit, self.gamma)
        p1, p2, _ = ratio_to_pressures(np.exp(u), floor, self.max_p)
        out = np.empty(2 * N_JOINTS)
        out[0::2] = p1
        out[1::2] = p2
        return out


def task_space_compliance(arm, theta, stiffness):
    """Tip position compliance ``J_p K^-1 J_p^T`` (m/N) for joint stiffnesses ``k``.

    Raises:
        InputError: if any joint stiffness is not strictly positive.
    """
    k = np.asarray(stiffness, dtype=float)
    if k.shape != (N_JOINTS,) or np.any(~(k > 0)):
        raise InputError("joint stiffnesses must be 12 positive values")
    J = position_jacobian(arm, theta)
    C = (J / k) @ J.T
    return 0.5 * (C + C.T)


def compliance_axes(C):
    """Principal compliances (ascending) and their directions (columns)."""
    return np.linalg.eigh(C)
