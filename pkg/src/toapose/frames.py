"""Reference frames and rotation algebra.

Navigation frame n is a local east/north/up-style frame fixed to the area the
vehicle drives on; body frame b is fixed to the vehicle with its origin at the
reference point whose (x, y) we estimate.  Roll and pitch are treated as known
constants (flat operating area), yaw is the single free attitude parameter.

The rotation convention maps body +z to navigation -z at zero attitude, i.e.
``rotation_matrix(Attitude(0.0)) == diag(1, -1, -1)``.  Everything downstream
(lever arms, obstacle boxes, visibility checks) is expressed consistently in
this convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Attitude",
    "Pose",
    "RotationVectorization",
    "wrap_angle",
    "rotation_matrix",
    "rotation_yaw_derivative",
    "vectorize_rotation",
    "antenna_position",
    "kronecker_row",
]


def wrap_angle(angle: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped = math.pi
    return wrapped


@dataclass(frozen=True)
class Attitude:
    """Vehicle attitude: free yaw plus known constant roll and pitch.

    The yaw is normalized to (-pi, pi] on construction, so arithmetic that
    rebuilds an ``Attitude`` never has to renormalize by hand.
    """

    yaw: float
    roll: float = 0.0
    pitch: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.yaw) and math.isfinite(self.roll) and math.isfinite(self.pitch)):
            raise ValueError("attitude angles must be finite")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def with_yaw(self, yaw: float) -> "Attitude":
        """Return a copy with a new yaw (roll/pitch kept)."""
        return Attitude(yaw, self.roll, self.pitch)


@dataclass(frozen=True)
class Pose:
    """Planar vehicle pose: east/north position, attitude, fixed height."""

    x: float
    y: float
    attitude: Attitude
    h: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.h)):
            raise ValueError("pose coordinates must be finite")

    @property
    def yaw(self) -> float:
        return self.attitude.yaw

    @property
    def center(self) -> np.ndarray:
        """Reference-point position in frame n as a 3-vector [x, y, h]."""
        return np.array([self.x, self.y, self.h])

    def as_state(self) -> np.ndarray:
        """Estimation state [x, y, yaw]."""
        return np.array([self.x, self.y, self.attitude.yaw])


def rotation_matrix(att: Attitude) -> np.ndarray:
    """Body-to-navigation rotation matrix for the given attitude."""
    s_psi, c_psi = math.sin(att.yaw), math.cos(att.yaw)
    s_gam, c_gam = math.sin(att.roll), math.cos(att.roll)
    s_phi, c_phi = math.sin(att.pitch), math.cos(att.pitch)
    return np.array(
        [
            [c_psi * c_gam, s_psi * c_phi + c_psi * s_gam * s_phi, -s_psi * s_phi + c_psi * s_gam * c_phi],
            [s_psi * c_gam, -c_psi * c_phi + s_psi * s_gam * s_phi, c_psi * s_phi + s_psi * s_gam * c_phi],
            [s_gam, -c_gam * s_phi, -c_gam * c_phi],
        ]
    )


def rotation_yaw_derivative(att: Attitude) -> np.ndarray:
    """Derivative of ``rotation_matrix`` with respect to yaw.

    Only the yaw is free, so this is the one rotation sensitivity the
    estimators ever need.  The third row of R does not depend on yaw and the
    derivative's third row is therefore zero.
    """
    s_psi, c_psi = math.sin(att.yaw), math.cos(att.yaw)
    s_gam, c_gam = math.sin(att.roll), math.cos(att.roll)
    s_phi, c_phi = math.sin(att.pitch), math.cos(att.pitch)
    return np.array(
        [
            [-s_psi * c_gam, c_psi * c_phi - s_psi * s_gam * s_phi, -c_psi * s_phi - s_psi * s_gam * c_phi],
            [c_psi * c_gam, s_psi * c_phi + c_psi * s_gam * s_phi, -s_psi * s_phi + c_psi * s_gam * c_phi],
            [0.0, 0.0, 0.0],
        ]
    )


@dataclass(frozen=True)
class RotationVectorization:
    """Affine decomposition of the column-stacked rotation matrix.

    vec(R) = alpha + gamma_mat @ u with u = [sin(yaw), cos(yaw)].  alpha and
    gamma_mat depend only on the known roll/pitch, which is what lets the
    relaxation treat u as the only attitude unknown.
    """

    alpha: np.ndarray
    gamma_mat: np.ndarray
    u: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.alpha.shape != (9,) or self.gamma_mat.shape != (9, 2) or self.u.shape != (2,):
            raise ValueError("vectorization blocks have fixed shapes (9,), (9,2), (2,)")

    def vec(self) -> np.ndarray:
        """Reassemble vec(R) (column-stacked)."""
        return self.alpha + self.gamma_mat @ self.u


def vectorize_rotation(att: Attitude) -> RotationVectorization:
    """Split vec(R) into its yaw-independent and yaw-linear parts."""
    s_gam, c_gam = math.sin(att.roll), math.cos(att.roll)
    s_phi, c_phi = math.sin(att.pitch), math.cos(att.pitch)
    alpha = np.array([0.0, 0.0, s_gam, 0.0, 0.0, -c_gam * s_phi, 0.0, 0.0, -c_gam * c_phi])
    gamma_mat = np.array(
        [
            [0.0, c_gam],
            [c_gam, 0.0],
            [0.0, 0.0],
            [c_phi, s_gam * s_phi],
            [s_gam * s_phi, -c_phi],
            [0.0, 0.0],
            [-s_phi, s_gam * c_phi],
            [s_gam * c_phi, s_phi],
            [0.0, 0.0],
        ]
    )
    u = np.array([math.sin(att.yaw), math.cos(att.yaw)])
    return RotationVectorization(alpha=alpha, gamma_mat=gamma_mat, u=u)


def antenna_position(pose: Pose, lever: np.ndarray) -> np.ndarray:
    """Navigation-frame position of a body-fixed point (antenna lever arm)."""
    lever = np.asarray(lever, dtype=float)
    return pose.center + rotation_matrix(pose.attitude) @ lever


def kronecker_row(l: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Row vector r with r @ vec(R) == p @ R @ l for column-stacked vec."""
    l = np.asarray(l, dtype=float)
    p = np.asarray(p, dtype=float)
    return np.kron(l, p)
