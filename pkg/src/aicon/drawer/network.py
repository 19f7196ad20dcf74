"""Drawer-opening component network: EE, hand, handle and joint estimators plus gates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..estimation import (
    GaussianEstimate,
    bearing_model,
    information_gain_gradient,
    predicted_information_gain,
)
from ..geometry import axis_angle_jacobian, axis_from_angles, camera_pose, pose_to_matrix, rotate_jacobian
from ..gradcheck import numeric_jacobian
from ..graph import ActiveConnection, ComponentSpec, Goal, Graph, GraphError, QuantityNode

logger = logging.getLogger(__name__)

E3 = np.array([0.0, 0.0, 1.0])
LABELS = ("open", "approach", "grasp", "look_around", "regain_view")


def logistic(x):
    return expit(x)


@dataclass
class NetworkConfig:
    dt: float = 0.05
    camera_offset: float = 0.10  # behind the grasp frame
    fov_half_angle: float = np.deg2rad(35.0)
    vis_width: float = np.deg2rad(5.0)
    grasp_d0: float = 0.04
    grasp_wd: float = 0.01
    hand_closed: float = 0.3
    hand_width: float = 0.1
    force_f0: float = 1.0
    force_width: float = 0.25
    certainty_tau: float = 3 * 0.02**2
    certainty_width: float = 1.5e-4
    sigma_bearing: float = 0.01
    sigma_grip: float = 0.003
    spring: float = 50.0
    preload: float = 2.0
    sigma_odom: float = 0.001
    sigma_odom_rot: float = 0.001
    sigma_hand: float = 0.01
    q_ee: float = 1e-7
    q_hand: float = 1e-5
    q_drawer: float = 1e-8
    q_drawer_moving: float = 1e-4
    sigma_joint_obs: float = 0.003
    q_joint: tuple = (1e-7, 1e-7, 1e-7, 1e-8, 1e-8, 1e-8)
    follow_slip: float = 0.1  # fraction of each predicted opening step taken as its std
    follow_width: float = 0.02
    anchor_below: float = 0.5  # grasp likelihood under which p is re-anchored instead of filtered
    goal_q: float = 0.20

    def __post_init__(self):
        for name in ("dt", "vis_width", "grasp_wd", "hand_width", "force_width", "certainty_width",
                     "sigma_bearing", "sigma_grip", "spring", "sigma_joint_obs", "follow_width"):
            if getattr(self, name) <= 0:
                raise GraphError(f"network config: {name} must be positive")
        if not 0 < self.fov_half_angle < np.pi / 2:
            raise GraphError("network config: fov_half_angle must lie in (0, pi/2)")


@dataclass
class DrawerPrior:
    ee_pose: np.ndarray
    hand: float
    handle: np.ndarray
    handle_cov: np.ndarray
    phi: float
    theta: float
    axis_sigma: float = 0.05
    q_sigma: float = 0.001
    ee_cov: np.ndarray = field(default_factory=lambda: 1e-6 * np.eye(6))


# --- shared geometry -------------------------------------------------------


def _camera(ee, cfg):
    R, c = camera_pose(ee, -cfg.camera_offset)
    return R, c


def _camera_jacobians(ee, cfg):
    """dc/d(ee) (3x6) and d(axis)/d(ee) (3x6) for the camera centre and optical axis."""
    w = ee[3:]
    dz = rotate_jacobian(w, E3)
    dc = np.hstack([np.eye(3), -cfg.camera_offset * dz])
    da = np.hstack([np.zeros((3, 3)), dz])
    return dc, da


def view_angle(ee, handle, cfg):
    R, c = _camera(ee, cfg)
    v = np.asarray(handle, dtype=float) - c
    n = float(np.linalg.norm(v))
    if n < 1e-9:
        return None
    return float(np.arctan2(np.linalg.norm(np.cross(R[:, 2], v)), R[:, 2] @ v))


def visibility(ee, handle, cfg) -> float:
    alpha = view_angle(ee, handle, cfg)
    if alpha is None:
        logger.warning("handle estimate coincides with the camera centre; p_visible set to 0")
        return 0.0
    return float(logistic((cfg.fov_half_angle - alpha) / cfg.vis_width))


def _visibility_jacobians(ee, handle, cfg):
    R, c = _camera(ee, cfg)
    a = R[:, 2]
    v = np.asarray(handle, dtype=float) - c
    n = float(np.linalg.norm(v))
    if n < 1e-9:
        return np.zeros((1, 6)), np.zeros((1, 3))
    vh = v / n
    cos = float(np.clip(a @ vh, -1.0, 1.0))
    sin = float(np.linalg.norm(np.cross(a, vh)))
    if sin < 1e-9:
        return np.zeros((1, 6)), np.zeros((1, 3))
    alpha = np.arctan2(sin, cos)
    p = logistic((cfg.fov_half_angle - alpha) / cfg.vis_width)
    dp_dalpha = -p * (1 - p) / cfg.vis_width
    dcos_dv = (a - cos * vh) / n
    dcos_da = vh
    dalpha_dv = -dcos_dv / sin
    dalpha_da = -dcos_da / sin
    dc, da = _camera_jacobians(ee, cfg)
    d_ee = dp_dalpha * (-dalpha_dv @ dc + dalpha_da @ da)
    d_h = dp_dalpha * dalpha_dv
    return d_ee[None, :], d_h[None, :]


def grasp_factors(ee, hand, handle, ft, cfg):
    d = float(np.linalg.norm(ee[:3] - handle))
    f = float(np.linalg.norm(ft[:3]))
    sd = logistic((cfg.grasp_d0 - d) / cfg.grasp_wd)
    sh = logistic((cfg.hand_closed - hand) / cfg.hand_width)
    sf = logistic((f - cfg.force_f0) / cfg.force_width)
    return d, f, sd, sh, sf


def held(pg, cfg):
    """Sharpened grasp likelihood: only a confident grasp couples the handle to the hand."""
    return logistic((pg - 0.5) / cfg.follow_width)


def certainty(trace_sigma, cfg) -> float:
    return float(logistic((cfg.certainty_tau - trace_sigma) / cfg.certainty_width))


def _unit(x):
    n = float(np.linalg.norm(x))
    return x / n if n > 1e-12 else np.zeros_like(x)


# --- connections -----------------------------------------------------------


def _motion(cid, actuator, dt):
    def evaluate(vals):
        return dt * vals[0]

    def jacobian(i, vals):
        return dt * np.eye(vals[0].shape[0])

    return ActiveConnection(cid, [actuator], evaluate, jacobian)


def _identity(cid, node):
    return ActiveConnection(cid, [node], lambda vals: vals[0].copy(), lambda i, vals: np.eye(vals[0].shape[0]))


def _vis_connection(cfg):
    def evaluate(vals):
        return np.array([visibility(vals[0], vals[1], cfg)])

    def jacobian(i, vals):
        d_ee, d_h = _visibility_jacobians(vals[0], vals[1], cfg)
        return d_ee if i == 0 else d_h

    return ActiveConnection("c_vis", ["x_ee", "x_drawer"], evaluate, jacobian)


def _grasp_connection(cfg):
    # inputs: x_ee, x_hand, x_drawer, z_ft, s_drawer
    def evaluate(vals, covs):
        _, _, sd, sh, sf = grasp_factors(vals[0], vals[1][0], vals[2], vals[3], cfg)
        return np.array([sd * sh * sf])

    def jacobian(i, vals, covs):
        ee, hand, handle, ft = vals[0], vals[1][0], vals[2], vals[3]
        d, f, sd, sh, sf = grasp_factors(ee, hand, handle, ft, cfg)
        if i == 0 or i == 2:
            dd = _unit(ee[:3] - handle)
            g = -sd * (1 - sd) / cfg.grasp_wd * sh * sf * dd
            return np.concatenate([g, np.zeros(3)])[None, :] if i == 0 else -g[None, :]
        if i == 1:
            return np.array([[-sd * sh * (1 - sh) / cfg.hand_width * sf]])
        if i == 3:
            g = sd * sh * sf * (1 - sf) / cfg.force_width * _unit(ft[:3])
            return np.concatenate([g, np.zeros(3)])[None, :]
        return np.zeros((1, 1))

    def path_jacobian(i, vals, covs, upstream):
        """Sensitivity of the intended grasp: each factor raised on its own."""
        dim = vals[i].shape[0]
        if upstream.ravel()[0] >= 0:
            return np.zeros((1, dim))
        ee, hand, handle, ft, s = vals[0], vals[1][0], vals[2], vals[3], vals[4][0]
        d, f, sd, sh, sf = grasp_factors(ee, hand, handle, ft, cfg)
        pg = sd * sh * sf
        kappa = certainty(np.trace(covs[2]), cfg)  # gate on the actual handle uncertainty
        room = 1.0 - pg
        if i == 0:
            g = kappa * room * (1 - sd) / cfg.grasp_wd * -_unit(ee[:3] - handle)
            return np.concatenate([g, np.zeros(3)])[None, :]
        if i == 1:
            return np.array([[-kappa * room * sd * (1 - sh) / cfg.hand_width]])
        if i == 4:
            return np.array([[-(1 - kappa) * room / cfg.certainty_width]])
        return np.zeros((1, dim))

    return ActiveConnection("c_grasp", ["x_ee", "x_hand", "x_drawer", "z_ft", "s_drawer"],
                            evaluate, jacobian, path_jacobian, needs_covariance=True)


def _ray_connection(cfg):
    """Bearing -> (information weight, point on the measured ray, predicted ray direction).

    The measured ray is cut by the plane through the current estimate normal
    to the predicted direction, which keeps the update linear in the bearing
    noise (noisy rays through one centre would otherwise drag the estimate
    toward the camera).
    """

    def parts(ee, z, handle):
        R, c = _camera(ee, cfg)
        n = np.array([z[1], z[2], 1.0])
        r = R @ n
        v = handle - c
        D = max(float(np.linalg.norm(v)), 1e-3)
        return R, c, n, r, v, D

    def evaluate(vals):
        ee, z, handle = vals
        R, c, n, r, v, D = parts(ee, z, handle)
        omega = z[0] / (cfg.sigma_bearing * D) ** 2
        m = c + r * (v @ v) / (v @ r)
        return np.concatenate([[omega], m, v / D])

    def jacobian(i, vals):
        ee, z, handle = vals
        R, c, n, r, v, D = parts(ee, z, handle)
        vr = float(v @ r)
        alpha = (v @ v) / vr
        dm_dv = np.outer(r, 2 * v / vr - (v @ v) * r / vr**2)
        dm_dr = alpha * np.eye(3) - (v @ v) / vr**2 * np.outer(r, v)
        rh = v / D
        dw_dv = -2 * z[0] / (cfg.sigma_bearing**2 * D**3) * rh
        drh_dv = (np.eye(3) - np.outer(rh, rh)) / D
        J = np.zeros((7, vals[i].shape[0]))
        if i == 0:
            dc, _ = _camera_jacobians(ee, cfg)
            dr = np.hstack([np.zeros((3, 3)), rotate_jacobian(ee[3:], n)])
            J[0] = -dw_dv @ dc
            J[1:4] = dc - dm_dv @ dc + dm_dr @ dr
            J[4:7] = -drh_dv @ dc
        elif i == 1:
            J[0, 0] = 1.0 / (cfg.sigma_bearing * D) ** 2
            J[1:4, 1:3] = dm_dr @ R[:, :2]
        else:
            J[0] = dw_dv
            J[1:4] = dm_dv
            J[4:7] = drh_dv
        return J

    return ActiveConnection("c_ray", ["z_ee", "z_rgb", "x_drawer"], evaluate, jacobian)


def _grip_connection(cfg):
    """Handle position implied by the wrist spring.

    Weighted by the grasp likelihood and by the current contact force, which
    reacts on the same tick the handle is lost.
    """

    def weight(ft, pg):
        f = float(np.linalg.norm(ft[:3]))
        sf = logistic((f - cfg.force_f0) / cfg.force_width)
        return held(pg[0], cfg), sf, f

    def evaluate(vals):
        ee, ft, pg = vals
        R, t = pose_to_matrix(ee)
        g = t + (ft[:3] - cfg.preload * R[:, 2]) / cfg.spring
        s, sf, _ = weight(ft, pg)
        return np.concatenate([[s * sf / cfg.sigma_grip**2], g])

    def jacobian(i, vals):
        ee, ft, pg = vals
        s, sf, f = weight(ft, pg)
        J = np.zeros((4, vals[i].shape[0]))
        if i == 0:
            J[1:, :3] = np.eye(3)
            J[1:, 3:] = -cfg.preload / cfg.spring * rotate_jacobian(ee[3:], E3)
        elif i == 1:
            J[1:, :3] = np.eye(3) / cfg.spring
            J[0, :3] = s * sf * (1 - sf) / cfg.force_width * _unit(ft[:3]) / cfg.sigma_grip**2
        else:
            J[0, 0] = s * (1 - s) / cfg.follow_width * sf / cfg.sigma_grip**2
        return J

    return ActiveConnection("c_grip", ["z_ee", "z_ft", "p_grasped"], evaluate, jacobian)


def _info_model(cfg):
    def model_for(ee):
        R, c = _camera(ee, cfg)
        return bearing_model(R, c, cfg.sigma_bearing)

    return model_for


def _info_connection(cfg):
    """Predicted handle uncertainty after the next view: trace minus visible information gain."""
    model_for = _info_model(cfg)

    def gain(ee, handle, cov):
        return predicted_information_gain(GaussianEstimate(handle, cov), model_for, ee)

    def evaluate(vals, covs):
        ee, handle, pv = vals
        return np.array([np.trace(covs[1]) - pv[0] * gain(ee, handle, covs[1])])

    def jacobian(i, vals, covs):
        ee, handle, pv = vals
        if i == 0:
            return -pv[0] * information_gain_gradient(GaussianEstimate(handle, covs[1]), model_for, ee)[None, :]
        if i == 1:
            return -pv[0] * numeric_jacobian(lambda h: np.array([gain(ee, h, covs[1])]), handle, 1e-5)
        return np.array([[-gain(ee, handle, covs[1])]])

    return ActiveConnection("c_info", ["x_ee", "x_drawer", "p_visible"], evaluate, jacobian, needs_covariance=True)


def _follow_connection(cfg):
    """Opening predicted from the commanded EE velocity when the handle is held."""

    def evaluate(vals):
        xj, pg, a = vals
        u = axis_from_angles(xj[0], xj[1])
        out = np.zeros(6)
        out[2] = held(pg[0], cfg) * (u @ a[:3]) * cfg.dt
        return out

    def jacobian(i, vals):
        xj, pg, a = vals
        u = axis_from_angles(xj[0], xj[1])
        s = held(pg[0], cfg)
        J = np.zeros((6, vals[i].shape[0]))
        if i == 0:
            J[2, :2] = s * (a[:3] @ axis_angle_jacobian(xj[0], xj[1])) * cfg.dt
        elif i == 1:
            J[2, 0] = s * (1 - s) / cfg.follow_width * (u @ a[:3]) * cfg.dt
        else:
            J[2, :3] = s * u * cfg.dt
        return J

    def path_jacobian(i, vals, upstream):
        if i == 1:
            # a unit pull along the axis is what a held handle enables
            J = np.zeros((6, 1))
            J[2, 0] = cfg.dt
            return J
        return jacobian(i, vals)

    return ActiveConnection("c_follow", ["x_joint", "p_grasped", "a_ee"], evaluate, jacobian, path_jacobian)


def _carry_connection(cfg):
    """Handle displacement predicted from the commanded EE velocity when held."""

    def evaluate(vals):
        xj, pg, a = vals
        u = axis_from_angles(xj[0], xj[1])
        return held(pg[0], cfg) * u * (u @ a[:3]) * cfg.dt

    def jacobian(i, vals):
        xj, pg, a = vals
        u = axis_from_angles(xj[0], xj[1])
        s = held(pg[0], cfg)
        if i == 0:
            du = axis_angle_jacobian(xj[0], xj[1])
            J = np.zeros((3, 6))
            J[:, :2] = s * cfg.dt * (np.outer(u, a[:3] @ du) + (u @ a[:3]) * du)
            return J
        if i == 1:
            return (s * (1 - s) / cfg.follow_width * u * (u @ a[:3]) * cfg.dt)[:, None]
        J = np.zeros((3, 6))
        J[:, :3] = s * cfg.dt * np.outer(u, u)
        return J

    return ActiveConnection("c_carry", ["x_joint", "p_grasped", "a_ee"], evaluate, jacobian)


def _joint_obs_connection():
    """Handle estimate, grasp likelihood, handle covariance (flattened) and its rms std in mm."""

    def evaluate(vals, covs):
        cov = np.asarray(covs[0], dtype=float)
        std_mm = 1e3 * np.sqrt(max(np.trace(cov), 0.0) / 3)
        return np.concatenate([vals[0], vals[1], cov.ravel(), [std_mm]])

    def jacobian(i, vals, covs):
        J = np.zeros((14, vals[i].shape[0]))
        if i == 0:
            J[:3] = np.eye(3)
        else:
            J[3, 0] = 1.0
        return J

    return ActiveConnection("c_joint_obs", ["x_drawer", "p_grasped"], evaluate, jacobian, needs_covariance=True)


# --- components ------------------------------------------------------------


def _odometry_component(state, motion, odom, R, Q):
    """Additive motion prediction followed by a linear update on a direct reading."""

    def gain(cov):
        P = cov + Q
        return P, P @ np.linalg.inv(P + R)

    def update(prev, contribs, cov):
        P, K = gain(cov)
        x = prev + contribs[0]
        x = x + K @ (contribs[1] - x)
        eye = np.eye(len(prev))
        return x, (eye - K) @ P @ (eye - K).T + K @ R @ K.T

    def jacobians(prev, contribs, cov):
        _, K = gain(cov)
        rest = np.eye(len(prev)) - K
        return rest, [rest, K]

    def path_jacobians(prev, contribs, cov):
        _, K = gain(cov)
        return np.eye(len(prev)), [np.eye(len(prev)), K]

    return ComponentSpec(state, [motion, odom], update, jacobians, path_jacobians)


def _gate_component(state, cid):
    def update(prev, contribs, cov):
        return contribs[0].copy(), cov

    def jacobians(prev, contribs, cov):
        return np.zeros((1, 1)), [np.eye(1)]

    return ComponentSpec(state, [cid], update, jacobians)


def _drawer_component(cfg):
    """Information-form fusion of a bearing ray and the grasp-spring position."""

    def solve(prev, contribs, cov):
        ray, grip, carry = contribs
        prev = prev + carry
        omega, c, r = ray[0], ray[1:4], ray[4:7]
        wg, g = grip[0], grip[1:4]
        # the handle drifts while it is being pulled
        Q = (cfg.q_drawer + cfg.q_drawer_moving * wg * cfg.sigma_grip**2) * np.eye(3)
        Lam = np.linalg.inv(cov + Q)
        A = omega * (np.eye(3) - np.outer(r, r))
        M = Lam + A + wg * np.eye(3)
        Minv = np.linalg.inv(M)
        x = prev + np.linalg.solve(M, A @ (c - prev) + wg * (g - prev))
        return x, Minv, Lam, A, omega, c, r, wg, g

    def update(prev, contribs, cov):
        x, Minv, *_ = solve(prev, contribs, cov)
        return x, 0.5 * (Minv + Minv.T)

    def jacobians(prev, contribs, cov):
        x, Minv, Lam, A, omega, c, r, wg, g = solve(prev, contribs, cov)
        d_ray = np.zeros((3, 7))
        d_ray[:, 0] = Minv @ (np.eye(3) - np.outer(r, r)) @ (c - x)
        d_ray[:, 1:4] = Minv @ A
        for k in range(3):
            ek = np.zeros(3)
            ek[k] = 1.0
            d_ray[:, 4 + k] = -omega * Minv @ (np.outer(ek, r) + np.outer(r, ek)) @ (c - x)
        d_grip = np.zeros((3, 4))
        dLam = -cfg.q_drawer_moving * cfg.sigma_grip**2 * Lam @ Lam
        d_grip[:, 0] = Minv @ (g - x) + Minv @ dLam @ (prev + contribs[2] - x)
        d_grip[:, 1:] = wg * Minv
        return Minv @ Lam, [d_ray, d_grip, Minv @ Lam]

    def path_jacobians(prev, contribs, cov):
        # the handle does not move because the robot acts
        return np.eye(3), [np.zeros((3, 7)), np.zeros((3, 4)), np.zeros((3, 3))]

    return ComponentSpec("x_drawer", ["c_ray", "c_grip", "c_carry"], update, jacobians, path_jacobians)


def _axis_second(phi, theta):
    sp, cp, st, ct = np.sin(phi), np.cos(phi), np.sin(theta), np.cos(theta)
    u_pp = np.array([-st * cp, -st * sp, 0.0])
    u_pt = np.array([-ct * sp, ct * cp, 0.0])
    u_tt = -axis_from_angles(phi, theta)
    return u_pp, u_pt, u_tt


def _joint_component(cfg):
    """Joint state (phi, theta, q, p) from the handle estimate h = p + q u(phi, theta).

    While the handle is held this is an EKF on the full state whose opening
    variance grows with the predicted motion.  Otherwise the closed position
    p is re-anchored to the handle estimate at the current opening.
    """
    Q = np.diag(cfg.q_joint)
    Rm = cfg.sigma_joint_obs**2 * np.eye(3)
    slip = cfg.follow_slip**2

    def measurement(x):
        u = axis_from_angles(x[0], x[1])
        Ju = axis_angle_jacobian(x[0], x[1])
        h = x[3:] + x[2] * u
        H = np.hstack([x[2] * Ju, u[:, None], np.eye(3)])
        return u, Ju, h, H

    def dH(x, j):
        """Derivative of the measurement Jacobian w.r.t. state entry j."""
        u_pp, u_pt, u_tt = _axis_second(x[0], x[1])
        Ju = axis_angle_jacobian(x[0], x[1])
        out = np.zeros((3, 6))
        if j == 0:
            out[:, 0], out[:, 1], out[:, 2] = x[2] * u_pp, x[2] * u_pt, Ju[:, 0]
        elif j == 1:
            out[:, 0], out[:, 1], out[:, 2] = x[2] * u_pt, x[2] * u_tt, Ju[:, 1]
        elif j == 2:
            out[:, :2] = Ju
        return out

    def unpack(prev, contribs, cov):
        step = contribs[0]
        obs = contribs[1]
        z, pg, sig = obs[:3], obs[3], obs[4:13].reshape(3, 3)
        x = prev + step
        P = cov + Q
        P[2, 2] += slip * step[2] ** 2
        return x, P, z, pg >= cfg.anchor_below, sig, (1e-3 * obs[13]) ** 2 * np.eye(3)

    def ekf(x, P, z, r):
        u, Ju, h, H = measurement(x)
        S = H @ P @ H.T + r + Rm
        Sinv = np.linalg.inv(S)
        K = P @ H.T @ Sinv
        return H, Sinv, K, z - h

    def update(prev, contribs, cov):
        x, P, z, full, sig, r = unpack(prev, contribs, cov)
        if full:
            H, Sinv, K, nu = ekf(x, P, z, r)
            A = np.eye(6) - K @ H
            return x + K @ nu, A @ P @ A.T + K @ (r + Rm) @ K.T
        u = axis_from_angles(x[0], x[1])
        out = x.copy()
        out[3:] = z - x[2] * u
        Pn = P.copy()
        Pn[3:, :] = 0.0
        Pn[:, 3:] = 0.0
        Pn[3:, 3:] = 0.5 * (sig + sig.T) + Rm
        return out, Pn

    def jacobians(prev, contribs, cov):
        x, P, z, full, sig, r = unpack(prev, contribs, cov)
        d_obs = np.zeros((6, 14))
        if not full:
            J = np.eye(6)
            J[3:, 3:] = 0.0
            Ju = axis_angle_jacobian(x[0], x[1])
            J[3:, :2] = -x[2] * Ju
            J[3:, 2] = -axis_from_angles(x[0], x[1])
            d_obs[3:, :3] = np.eye(3)
            return J, [J, d_obs]
        H, Sinv, K, nu = ekf(x, P, z, r)
        J = np.eye(6) - K @ H
        for j in range(3):
            D = dH(x, j)
            dK = P @ D.T @ Sinv - K @ (D @ P @ H.T + H @ P @ D.T) @ Sinv
            J[:, j] += dK @ nu
        d_step = J.copy()
        dP = np.zeros((6, 6))
        dP[2, 2] = 2 * slip * contribs[0][2]
        dK = dP @ H.T @ Sinv - K @ H @ dP @ H.T @ Sinv
        d_step[:, 2] += dK @ nu
        d_obs[:, :3] = K
        std_mm = contribs[1][13]
        d_obs[:, 13] = -(2e-6 * std_mm) * K @ Sinv @ nu
        return J, [d_step, d_obs]

    def path_jacobians(prev, contribs, cov):
        return np.eye(6), [np.eye(6), np.zeros((6, 14))]

    return ComponentSpec("x_joint", ["c_follow", "c_joint_obs"], update, jacobians, path_jacobians)


# --- assembly --------------------------------------------------------------


def drawer_goal(cfg: NetworkConfig, threshold: float = 1e-4) -> Goal:
    def cost(vals):
        return float((vals[0][2] - cfg.goal_q) ** 2)

    def grad(vals):
        g = np.zeros(6)
        g[2] = 2 * (vals[0][2] - cfg.goal_q)
        return [g]

    return Goal("open_drawer", ["x_joint"], cost, grad, threshold)


def initial_gates(prior: DrawerPrior, cfg: NetworkConfig) -> dict:
    pv = visibility(prior.ee_pose, prior.handle, cfg)
    est = GaussianEstimate(prior.handle, prior.handle_cov)
    s = np.trace(prior.handle_cov) - pv * predicted_information_gain(est, _info_model(cfg), prior.ee_pose)
    _, _, sd, sh, sf = grasp_factors(prior.ee_pose, prior.hand, prior.handle, np.zeros(6), cfg)
    return {"p_visible": pv, "p_grasped": sd * sh * sf, "s_drawer": s}


def build_drawer_network(prior: DrawerPrior, cfg: NetworkConfig | None = None) -> Graph:
    cfg = cfg or NetworkConfig()
    handle = np.asarray(prior.handle, dtype=float)
    joint0 = np.concatenate([[prior.phi, prior.theta, 0.0], handle])
    joint_cov = np.diag([prior.axis_sigma**2, prior.axis_sigma**2, prior.q_sigma**2, 0, 0, 0])
    joint_cov[3:, 3:] = prior.handle_cov
    gates = initial_gates(prior, cfg)
    nodes = [
        QuantityNode("a_ee", np.zeros(6), "actuator"),
        QuantityNode("a_hand", [0.0], "actuator"),
        QuantityNode("z_ee", prior.ee_pose, "sensor"),
        QuantityNode("z_hand", [prior.hand], "sensor"),
        QuantityNode("z_ft", np.zeros(6), "sensor"),
        QuantityNode("z_rgb", np.zeros(3), "sensor"),
        QuantityNode("x_ee", prior.ee_pose, covariance=prior.ee_cov),
        QuantityNode("x_hand", [prior.hand], covariance=[[cfg.sigma_hand**2]]),
        QuantityNode("x_drawer", handle, covariance=prior.handle_cov),
        QuantityNode("x_joint", joint0, covariance=joint_cov),
        QuantityNode("p_visible", [gates["p_visible"]]),
        QuantityNode("p_grasped", [gates["p_grasped"]]),
        QuantityNode("s_drawer", [gates["s_drawer"]]),
    ]
    R_ee = np.diag([cfg.sigma_odom**2] * 3 + [cfg.sigma_odom_rot**2] * 3)
    connections = [
        _motion("c_ee_motion", "a_ee", cfg.dt),
        _identity("c_ee_odom", "z_ee"),
        _motion("c_hand_motion", "a_hand", cfg.dt),
        _identity("c_hand_reading", "z_hand"),
        _vis_connection(cfg),
        _grasp_connection(cfg),
        _ray_connection(cfg),
        _grip_connection(cfg),
        _info_connection(cfg),
        _follow_connection(cfg),
        _carry_connection(cfg),
        _joint_obs_connection(),
    ]
    components = [
        _odometry_component("x_ee", "c_ee_motion", "c_ee_odom", R_ee, cfg.q_ee * np.eye(6)),
        _odometry_component("x_hand", "c_hand_motion", "c_hand_reading",
                            np.array([[cfg.sigma_hand**2]]), np.array([[cfg.q_hand]])),
        _drawer_component(cfg),
        _joint_component(cfg),
        _gate_component("p_visible", "c_vis"),
        _gate_component("p_grasped", "c_grasp"),
        _gate_component("s_drawer", "c_info"),
    ]
    return Graph(nodes, connections, components)


def behavior_label(nodes) -> str:
    """Map a gradient path (by its visited quantities) onto a behaviour name."""
    nodes = tuple(nodes)
    if nodes == ("x_joint", "a_ee"):
        return "open"
    if "s_drawer" in nodes and "p_visible" in nodes:
        return "regain_view"
    if "s_drawer" in nodes:
        return "look_around"
    if nodes[-1] == "a_hand" and "p_grasped" in nodes:
        return "grasp"
    if "p_grasped" in nodes and nodes[-2] == "x_ee":
        return "approach"
    return "other"


def drawer_sampler(graph: Graph, cfg: NetworkConfig):
    """Random operating points for the drawer gradient check."""
    base_handle = graph.values["x_drawer"].copy()

    def sample(rng):
        handle = base_handle + rng.normal(0, 0.05, 3)
        # grasp frame within a few gate widths of the handle so no logistic saturates,
        # camera no closer than 6 cm (bearing weights blow up like 1/distance^2)
        while True:
            offset = rng.normal(size=3)
            offset *= rng.uniform(0.005, 0.08) / np.linalg.norm(offset)
            ee = np.concatenate([handle + offset,
                                 [0.0, np.pi / 2, 0.0] + rng.normal(0, 0.3, 3)])
            if np.linalg.norm(handle - _camera(ee, cfg)[1]) > 0.06:
                break
        A = rng.normal(size=(3, 3)) * 0.03
        cov_d = A @ A.T + 1e-5 * np.eye(3)
        B = rng.normal(size=(6, 6)) * 0.02
        cov_j = B @ B.T + 1e-6 * np.eye(6)
        # inside the held() transition but clear of the filter switch at 0.5
        pg = rng.choice([rng.uniform(0.3, 0.45), rng.uniform(0.55, 0.7)])
        joint = np.concatenate([[np.pi + rng.normal(0, 0.2), np.pi / 2 + rng.normal(0, 0.2),
                                 rng.uniform(0.0, 0.3)], handle + rng.normal(0, 0.01, 3)])
        return {
            "x_ee": ee,
            "z_ee": ee + rng.normal(0, 0.01, 6),
            "x_hand": [rng.uniform(0, 0.7)],
            "z_hand": [rng.uniform(0, 1)],
            "x_drawer": handle,
            "x_joint": joint,
            "z_ft": rng.normal(0, 0.8, 6),
            "z_rgb": [rng.uniform(0.2, 1.0), *rng.uniform(-0.3, 0.3, 2)],
            "a_ee": rng.normal(0, 0.1, 6),
            "a_hand": [rng.normal(0, 1)],
            "p_visible": [rng.uniform(0, 1)],
            "p_grasped": [pg],
            "s_drawer": [rng.uniform(0, 3e-3)],
            ("cov", "x_drawer"): cov_d,
            ("cov", "x_joint"): cov_j,
            ("cov", "x_ee"): 1e-6 * np.eye(6) * rng.uniform(0.5, 2),
        }

    return sample
