"""Rigid transforms in 6-D local coordinates (translation, rotation vector)."""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation


def pose_to_matrix(pose6) -> tuple[np.ndarray, np.ndarray]:
    pose6 = np.asarray(pose6, dtype=float)
    return Rotation.from_rotvec(pose6[3:]).as_matrix(), pose6[:3].copy()


def matrix_to_pose(R, t) -> np.ndarray:
    return np.concatenate([np.asarray(t, dtype=float), Rotation.from_matrix(R).as_rotvec()])


def compose_twist(pose6, twist6, dt: float) -> np.ndarray:
    """Apply a world-frame twist (v, w) for ``dt`` seconds."""
    R, t = pose_to_matrix(pose6)
    twist6 = np.asarray(twist6, dtype=float)
    R2 = Rotation.from_rotvec(twist6[3:] * dt).as_matrix() @ R
    return matrix_to_pose(R2, t + twist6[:3] * dt)


def pose_difference(a6, b6) -> np.ndarray:
    """Local-coordinate difference a - b (world-frame rotation error)."""
    Ra, ta = pose_to_matrix(a6)
    Rb, tb = pose_to_matrix(b6)
    return np.concatenate([ta - tb, Rotation.from_matrix(Ra @ Rb.T).as_rotvec()])


def axis_from_angles(phi: float, theta: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def axis_angle_jacobian(phi: float, theta: float) -> np.ndarray:
    """d u / d (phi, theta) as a 3x2 matrix."""
    return np.array(
        [
            [-np.sin(theta) * np.sin(phi), np.cos(theta) * np.cos(phi)],
            [np.sin(theta) * np.cos(phi), np.cos(theta) * np.sin(phi)],
            [0.0, -np.sin(theta)],
        ]
    )


def quaternion_xyzw(pose6) -> np.ndarray:
    return Rotation.from_rotvec(np.asarray(pose6, dtype=float)[3:]).as_quat()


def camera_pose(ee_pose6, offset: float) -> tuple[np.ndarray, np.ndarray]:
    """Camera frame rigidly mounted ``offset`` metres along the EE z-axis."""
    R, t = pose_to_matrix(ee_pose6)
    return R, t + offset * R[:, 2]


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def right_jacobian(rotvec) -> np.ndarray:
    w = np.asarray(rotvec, dtype=float)
    th = float(np.linalg.norm(w))
    W = skew(w)
    if th < 1e-5:
        return np.eye(3) - 0.5 * W + W @ W / 6.0
    return np.eye(3) - (1 - np.cos(th)) / th**2 * W + (th - np.sin(th)) / th**3 * W @ W


def rotate_jacobian(rotvec, v) -> np.ndarray:
    """d(R(w) v)/dw for the rotation-vector parameterization."""
    R = Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix()
    return -R @ skew(v) @ right_jacobian(rotvec)
