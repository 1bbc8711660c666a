"""Position-only inverse kinematics for the redundant twelve-joint arm.

Each iteration takes a damped, weighted least-squares step on the tip
position error and adds a null-space motion that pulls joints toward the
middle of their range:

    dq = alpha * W^-1 J^T (J W^-1 J^T + lambda^2 I)^-1 e + k0 * N (-grad H)
    N  = I - pinv(J) J

with ``H(q) = sum(((q - mid) / range)^2)``.  ``W`` is diagonal and only
grows for joints that are moving toward their nearer limit.  The iterate
is clipped to the joint box after every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arm import N_JOINTS, position_and_jacobian, tip_position
from .errors import InputError


@dataclass(frozen=True)
class IkParams:
    max_iters: int = 200
    position_tolerance: float = 1e-4  # m
    damping: float = 1e-3  # m
    step_scale: float = 0.5
    null_gain: float = 0.02
    wln_enabled: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        if not self.position_tolerance > 0:
            raise InputError("position_tolerance must be positive")
        if self.damping < 0 or self.null_gain < 0:
            raise InputError("damping and null_gain must be non-negative")
        if not 0 < self.step_scale <= 1:
            raise InputError("step_scale must lie in (0, 1]")


@dataclass(frozen=True)
class IkResult:
    theta: np.ndarray
    converged: bool
    iterations: int
    residual: float


def limit_objective(theta, limits):
    return float(np.sum(((np.asarray(theta) - limits.mid) / limits.range) ** 2))


def limit_avoidance_gradient(theta, limits):
    """Gradient of the joint-centering objective ``sum(((q - mid) / range)^2)``."""
    return 2.0 * (np.asarray(theta, dtype=float) - limits.mid) / limits.range**2


def wln_weights(theta, limits, previous=None):
    """Diagonal weights for the weighted least-norm step.

    ``1 + |dH/dq_i|`` for joints whose distance from the range midpoint grew
    since ``previous``; 1 otherwise.  Without a previous iterate every
    off-center joint is treated as approaching its limit.
    """
    theta = np.asarray(theta, dtype=float)
    grad = np.abs(limit_avoidance_gradient(theta, limits))
    if previous is None:
        return 1.0 + grad
    prev = np.abs(limit_avoidance_gradient(previous, limits))
    return np.where(grad > prev, 1.0 + grad, 1.0)


def damped_weighted_step(J, e, weights, damping):
    """``W^-1 J^T (J W^-1 J^T + lambda^2 I)^-1 e``."""
    Winv = 1.0 / np.asarray(weights, dtype=float)
    JW = J * Winv
    A = JW @ J.T + damping**2 * np.eye(J.shape[0])
    return JW.T @ np.linalg.solve(A, e)


def null_space_projector(J):
    """Orthogonal projector onto the null space of ``J`` (exact pseudoinverse)."""
    return np.eye(J.shape[1]) - np.linalg.pinv(J) @ J


def ik_step(arm, theta, target_p, params=None, previous=None):
    """One solver iteration from ``theta`` toward tip position ``target_p``."""
    params = params if params is not None else IkParams()
    theta = np.asarray(theta, dtype=float)
    limits = arm.limits
    p, J = position_and_jacobian(arm, theta)
    e = np.asarray(target_p, dtype=float) - p
    w = wln_weights(theta, limits, previous) if params.wln_enabled else np.ones(N_JOINTS)
    dq = params.step_scale * damped_weighted_step(J, e, w, params.damping)
    if params.null_gain > 0:
        grad = limit_avoidance_gradient(theta, limits)
        dq = dq - params.null_gain * (null_space_projector(J) @ grad)
    return limits.clip(theta + dq)


def solve_position_ik(arm, theta0, target_p, params=None):
    """Iterate :func:`ik_step` until the tip is within tolerance of ``target_p``.

    The best iterate seen is returned, so for unreachable targets the
    residual is the distance from the closest point found.

    Raises:
        InputError: if the target contains NaN or infinity.
    """
    params = params if params is not None else IkParams()
    target = np.asarray(target_p, dtype=float)
    if target.shape != (3,) or not np.all(np.isfinite(target)):
        raise InputError(f"target must be a finite 3-vector, got {target_p!r}")
    theta = arm.limits.clip(np.asarray(theta0, dtype=float))
    best = theta
    best_res = float(np.linalg.norm(target - tip_position(arm, theta)))
    if best_res <= params.position_tolerance:
        return IkResult(best, True, 0, best_res)
    previous = None
    for it in range(1, params.max_iters + 1):
        theta, previous = ik_step(arm, theta, target, params, previous), theta
        res = float(np.linalg.norm(target - tip_position(arm, theta)))
        if res < best_res:
            best, best_res = theta, res
        if res <= params.position_tolerance:
            return IkResult(theta, True, it, res)
    return IkResult(best, False, params.max_iters, best_res)
