"""Extended Kalman filter steps and information-gain utilities."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class EstimationError(ValueError):
    pass


@dataclass
class GaussianEstimate:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        n = self.mean.shape[0]
        if cov.shape != (n, n):
            raise EstimationError(f"covariance shape {cov.shape} does not match mean dim {n}")
        if not np.allclose(cov, cov.T, atol=1e-9, rtol=0.0):
            raise EstimationError("covariance is not symmetric")
        self.covariance = 0.5 * (cov + cov.T)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def cholesky(self, jitter: float = 1e-10) -> np.ndarray:
        return np.linalg.cholesky(self.covariance + jitter * np.eye(self.dim))


@dataclass
class MeasurementModel:
    """``h`` predicts a measurement from the state, ``H`` is its Jacobian.

    ``residual`` computes ``z - h(x)``; override it for wrapped quantities.
    """

    h: Callable[[np.ndarray], np.ndarray]
    H: Callable[[np.ndarray], np.ndarray]
    R: np.ndarray
    residual: Callable | None = None

    def innovation(self, z, x) -> np.ndarray:
        if self.residual is not None:
            return np.asarray(self.residual(z, self.h(x)), dtype=float)
        return np.asarray(z, dtype=float) - np.asarray(self.h(x), dtype=float)


class UpdateResult(NamedTuple):
    estimate: GaussianEstimate
    innovation: np.ndarray
    skipped: bool


def _matrix(F, mean):
    return np.atleast_2d(np.asarray(F(mean) if callable(F) else F, dtype=float))


def ekf_predict(est: GaussianEstimate, f, F, Q) -> GaussianEstimate:
    """mean' = f(mean), cov' = F cov F^T + Q."""
    Fm = _matrix(F, est.mean)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = est.dim
    if Fm.shape != (n, n) or Q.shape != (n, n):
        raise EstimationError(f"dimension mismatch: state {n}, F {Fm.shape}, Q {Q.shape}")
    mean = np.asarray(f(est.mean), dtype=float) if callable(f) else Fm @ est.mean
    if mean.shape != (n,):
        raise EstimationError("transition changed the state dimension")
    cov = Fm @ est.covariance @ Fm.T + Q
    return GaussianEstimate(mean, 0.5 * (cov + cov.T))


def _joseph(P, H, R, K):
    A = np.eye(P.shape[0]) - K @ H
    cov = A @ P @ A.T + K @ R @ K.T
    return 0.5 * (cov + cov.T)


def ekf_update(est: GaussianEstimate, model: MeasurementModel, z, max_condition: float = 1e12) -> UpdateResult:
    """Standard EKF correction with a Joseph-form covariance update.

    The update is skipped (``skipped=True``) when the innovation covariance
    is numerically singular.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    H = _matrix(model.H, est.mean)
    R = np.atleast_2d(np.asarray(model.R, dtype=float))
    if H.shape != (z.shape[0], est.dim) or R.shape != (z.shape[0], z.shape[0]):
        raise EstimationError(f"measurement dimension mismatch: z {z.shape}, H {H.shape}, R {R.shape}")
    y = model.innovation(z, est.mean)
    P = est.covariance
    S = H @ P @ H.T + R
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > max_condition:
        return UpdateResult(est, y, True)
    K = np.linalg.solve(S, H @ P).T
    mean = est.mean + K @ y
    return UpdateResult(GaussianEstimate(mean, _joseph(P, H, R, K)), y, False)


def posterior_covariance(P, H, R) -> np.ndarray:
    S = H @ P @ H.T + R
    K = np.linalg.solve(S, H @ P).T
    return _joseph(P, H, R, K)


def predicted_information_gain(est: GaussianEstimate, model_for: Callable, sensor_pose) -> float:
    """trace(cov) minus the trace after a hypothetical measurement from ``sensor_pose``.

    ``model_for(pose)`` builds the measurement model seen from that pose.
    """
    P = est.covariance
    if not np.any(P):
        return 0.0
    model = model_for(np.asarray(sensor_pose, dtype=float))
    H = _matrix(model.H, est.mean)
    R = np.atleast_2d(np.asarray(model.R, dtype=float))
    S = H @ P @ H.T + R
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1e14:
        return 0.0
    gain = float(np.trace(P) - np.trace(posterior_covariance(P, H, R)))
    return max(gain, 0.0)


def information_gain_gradient(est, model_for, sensor_pose, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of the information gain w.r.t. the pose."""
    pose = np.asarray(sensor_pose, dtype=float)
    grad = np.zeros_like(pose)
    for i in range(pose.shape[0]):
        d = np.zeros_like(pose)
        d[i] = step
        grad[i] = (
            predicted_information_gain(est, model_for, pose + d)
            - predicted_information_gain(est, model_for, pose - d)
        ) / (2 * step)
    return grad


# --- bearing camera --------------------------------------------------------


def bearing(point, cam_R, cam_t) -> np.ndarray:
    """Normalized image coordinates of a world point; camera looks along its +z."""
    pc = cam_R.T @ (np.asarray(point, dtype=float) - cam_t)
    return pc[:2] / pc[2]


def bearing_jacobian(point, cam_R, cam_t) -> np.ndarray:
    pc = cam_R.T @ (np.asarray(point, dtype=float) - cam_t)
    x, y, z = pc
    J = np.array([[1 / z, 0.0, -x / z**2], [0.0, 1 / z, -y / z**2]])
    return J @ cam_R.T


def bearing_model(cam_R, cam_t, sigma: float) -> MeasurementModel:
    return MeasurementModel(
        h=lambda p: bearing(p, cam_R, cam_t),
        H=lambda p: bearing_jacobian(p, cam_R, cam_t),
        R=(sigma**2) * np.eye(2),
    )
