"""Screw-theory primitives on SE(3).

Conventions:
    - Twists are ordered (v, w): linear part first, angular part second.
    - A pose maps points from its own frame into the frame it is expressed
      in: ``x_parent = R @ x_child + p``.
    - Revolute twists are built from a unit axis ``w`` and a point ``q`` on
      the axis as ``v = -w x q``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPoseError, InvalidTwistError

UNIT_TOL = 1e-9
ORTHO_TOL = 1e-9
SMALL_ANGLE = 1e-7


def hat(w):
    """Skew-symmetric matrix with ``hat(w) @ u == cross(w, u)``."""
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m):
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def rodrigues(axis, angle):
    """Rotation by ``angle`` about the unit vector ``axis``.

    Below ``|angle| = 1e-7`` the second-order series is used so that
    ``1 - cos`` never cancels.
    """
    k = hat(axis)
    if abs(angle) < SMALL_ANGLE:
        return np.eye(3) + angle * k + 0.5 * angle * angle * (k @ k)
    s = np.sin(angle)
    half = np.sin(0.5 * angle)
    return np.eye(3) + s * k + 2.0 * half * half * (k @ k)


def _check_rotation(R):
    if R.shape != (3, 3):
        raise InvalidPoseError(f"rotation must be 3x3, got {R.shape}")
    err = np.max(np.abs(R.T @ R - np.eye(3)))
    if err > ORTHO_TOL:
        raise InvalidPoseError(f"rotation not orthonormal (max |R^T R - I| = {err:.2e})")
    det = np.linalg.det(R)
    if abs(det - 1.0) > ORTHO_TOL:
        raise InvalidPoseError(f"rotation determinant {det:.12f} != 1")


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform (rotation, translation).

    The rotation is validated on construction; pass ``orthonormalize=True``
    to :meth:`from_matrix` to project a slightly-off matrix onto SO(3)
    explicitly.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        p = np.array(self.translation, dtype=float).reshape(3)
        _check_rotation(R)
        R.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", p)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, T, orthonormalize=False):
        T = np.asarray(T, dtype=float)
        R = T[:3, :3]
        if orthonormalize:
            u, _, vt = np.linalg.svd(R)
            R = u @ np.diag([1.0, 1.0, np.linalg.det(u @ vt)]) @ vt
        return cls(R, T[:3, 3])

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, x):
        """Map a point (or an ``(n, 3)`` array of points) through the pose."""
        x = np.asarray(x, dtype=float)
        return x @ self.rotation.T + self.translation

    def __matmul__(self, other):
        return compose(self, other)

    def allclose(self, other, atol=1e-12):
        return np.allclose(self.rotation, other.rotation, atol=atol, rtol=0) and np.allclose(
            self.translation, other.translation, atol=atol, rtol=0
        )

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


@dataclass(frozen=True, eq=False)
class Twist:
    """Twist coordinates: linear part ``v`` and angular part ``w``."""

    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=float).reshape(3)
        w = np.array(self.w, dtype=float).reshape(3)
        v.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    @classmethod
    def revolute(cls, axis, point):
        """Twist of a revolute joint with unit ``axis`` passing through ``point``."""
        axis = np.asarray(axis, dtype=float)
        point = np.asarray(point, dtype=float)
        return cls(-np.cross(axis, point), axis)

    @classmethod
    def from_vector(cls, xi):
        xi = np.asarray(xi, dtype=float)
        return cls(xi[:3], xi[3:])

    def vector(self):
        return np.concatenate([self.v, self.w])

    def __repr__(self):
        return f"Twist(v={self.v.tolist()}, w={self.w.tolist()})"


def exp_twist(xi, theta):
    """Matrix exponential of ``xi * theta`` as a :class:`Pose`.

    Raises:
        InvalidTwistError: if ``|w|`` is neither 1 nor 0 (within 1e-9).
    """
    w = xi.w
    v = xi.v
    nw = np.linalg.norm(w)
    if nw < UNIT_TOL:
        return Pose(np.eye(3), v * theta)
    if abs(nw - 1.0) > UNIT_TOL:
        raise InvalidTwistError(f"angular part must be unit or zero, |w| = {nw:.12g}")
    R = rodrigues(w, theta)
    wxv = np.array([w[1] * v[2] - w[2] * v[1], w[2] * v[0] - w[0] * v[2], w[0] * v[1] - w[1] * v[0]])
    p = (np.eye(3) - R) @ wxv + w * (w @ v) * theta
    return Pose(R, p)


def compose(a, b):
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(a):
    Rt = a.rotation.T
    return Pose(Rt, -Rt @ a.translation)


def adjoint(g):
    """6x6 adjoint of ``g`` acting on (v, w) twists."""
    R = g.rotation
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = R
    Ad[:3, 3:] = hat(g.translation) @ R
    Ad[3:, 3:] = R
    return Ad
