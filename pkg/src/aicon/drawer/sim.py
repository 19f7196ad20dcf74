"""Kinematic drawer scene: prismatic drawer, velocity-controlled EE, soft hand, wrist sensors."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import IO

import numpy as np

from ..geometry import axis_from_angles, compose_twist, pose_to_matrix, quaternion_xyzw


class ScenarioError(ValueError):
    pass


@dataclass
class DrawerWorld:
    p: np.ndarray  # handle position with the drawer closed
    phi: float
    theta: float
    q: float = 0.0
    q_max: float = 0.35
    radius: float = 0.03  # grasp capture radius

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).copy()
        if self.p.shape != (3,):
            raise ScenarioError("handle position must be a 3-vector")
        if not 0.0 <= self.q <= self.q_max:
            raise ScenarioError(f"opening {self.q} outside [0, {self.q_max}]")

    @property
    def axis(self) -> np.ndarray:
        return axis_from_angles(self.phi, self.theta)

    @property
    def handle(self) -> np.ndarray:
        return self.p + self.q * self.axis

    def copy(self) -> "DrawerWorld":
        return replace(self, p=self.p.copy())


@dataclass
class RobotTruth:
    ee_pose: np.ndarray  # translation + rotation vector of the grasp frame
    hand: float = 1.0  # 0 closed, 1 open
    holding: bool = False

    def __post_init__(self):
        self.ee_pose = np.asarray(self.ee_pose, dtype=float).copy()
        self.hand = float(np.clip(self.hand, 0.0, 1.0))

    def copy(self) -> "RobotTruth":
        return replace(self, ee_pose=self.ee_pose.copy())


@dataclass
class SimConfig:
    dt: float = 0.05
    max_linear: float = 0.2
    max_angular: float = 0.5
    max_hand_rate: float = 2.0
    camera_offset: float = 0.10  # camera sits this far behind the grasp frame along its z-axis
    fov_half_angle: float = np.deg2rad(35.0)
    grasp_closure: float = 0.3
    slip: float = 0.02
    spring: float = 50.0  # N/m between handle and grasp frame
    preload: float = 2.0  # N pressed along the grasp z-axis while holding
    sigma_bearing: float = 0.01
    sigma_odom: float = 0.001
    sigma_odom_rot: float = 0.001
    sigma_ft: float = 0.1
    sigma_hand: float = 0.01
    strip_shove: tuple = (0.0, 0.0, 0.05)


@dataclass
class SensorFrame:
    bearing_valid: bool
    bearing: np.ndarray
    ft: np.ndarray
    ee_odom: np.ndarray
    hand: float
    clamped: bool = False

    def rgb_vector(self) -> np.ndarray:
        return np.array([float(self.bearing_valid), *self.bearing])


@dataclass
class DisturbanceEvent:
    kind: str  # shift_cabinet | strip_from_hand | sensor_noise_scale
    tick: int | None = None
    when_q: float | None = None  # fire once the true opening reaches this value while holding
    value: object = None

    def __post_init__(self):
        if self.kind not in ("shift_cabinet", "strip_from_hand", "sensor_noise_scale"):
            raise ScenarioError(f"unknown disturbance kind {self.kind!r}")
        if (self.tick is None) == (self.when_q is None):
            raise ScenarioError(f"{self.kind}: give exactly one of tick / when_q")
        if self.kind == "shift_cabinet":
            self.value = np.asarray(self.value, dtype=float)
            if self.value.shape != (3,):
                raise ScenarioError("shift_cabinet needs a 3-vector")
        if self.kind == "sensor_noise_scale" and (self.value is None or float(self.value) <= 0):
            raise ScenarioError("sensor_noise_scale needs a positive factor")


@dataclass
class DisturbanceScript:
    events: list = field(default_factory=list)
    noise_scale: float = 1.0
    fired: set = field(default_factory=set)

    def __post_init__(self):
        ticks = [e.tick for e in self.events if e.tick is not None]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise ScenarioError("disturbance ticks must be strictly increasing")

    def due(self, tick: int, world: DrawerWorld, robot: RobotTruth) -> list:
        out = []
        for i, e in enumerate(self.events):
            if i in self.fired:
                continue
            if (e.tick is not None and e.tick == tick) or (
                e.when_q is not None and robot.holding and world.q >= e.when_q
            ):
                self.fired.add(i)
                out.append(e)
        return out


def camera_frame(ee_pose, offset: float):
    R, t = pose_to_matrix(ee_pose)
    return R, t - offset * R[:, 2]


def in_view(point, ee_pose, cfg: SimConfig) -> tuple[bool, np.ndarray]:
    R, c = camera_frame(ee_pose, cfg.camera_offset)
    pc = R.T @ (np.asarray(point, dtype=float) - c)
    if pc[2] <= 1e-9:
        return False, pc
    angle = np.arctan2(np.hypot(pc[0], pc[1]), pc[2])
    return bool(angle <= cfg.fov_half_angle), pc


def render_bearing(world: DrawerWorld, robot: RobotTruth, sigma: float, rng, cfg: SimConfig):
    """Noisy normalized image coordinates of the handle, or None outside the frustum."""
    noise = rng.normal(0.0, sigma, size=2)  # drawn unconditionally to keep the stream aligned
    ok, pc = in_view(world.handle, robot.ee_pose, cfg)
    if not ok:
        return None
    return pc[:2] / pc[2] + noise


def _clamp(v, limit):
    n = float(np.linalg.norm(v))
    return (v * (limit / n), True) if n > limit else (v, False)


def sim_step(world: DrawerWorld, robot: RobotTruth, commands: dict, script: DisturbanceScript,
             tick: int, rng: np.random.Generator, cfg: SimConfig):
    """Advance the scene by one control period and render the sensors."""
    world, robot = world.copy(), robot.copy()
    twist = np.asarray(commands.get("ee_twist", np.zeros(6)), dtype=float)
    lin, c1 = _clamp(twist[:3], cfg.max_linear)
    ang, c2 = _clamp(twist[3:], cfg.max_angular)
    rate = float(commands.get("hand_rate", 0.0))
    c3 = abs(rate) > cfg.max_hand_rate
    rate = float(np.clip(rate, -cfg.max_hand_rate, cfg.max_hand_rate))

    old_t = robot.ee_pose[:3].copy()
    robot.ee_pose = compose_twist(robot.ee_pose, np.concatenate([lin, ang]), cfg.dt)
    robot.hand = float(np.clip(robot.hand + rate * cfg.dt, 0.0, 1.0))
    if robot.holding:
        u = world.axis
        world.q = float(np.clip(world.q + u @ (robot.ee_pose[:3] - old_t), 0.0, world.q_max))
        if np.linalg.norm(robot.ee_pose[:3] - world.handle) > cfg.slip:
            robot.holding = False
    elif robot.hand < cfg.grasp_closure and np.linalg.norm(robot.ee_pose[:3] - world.handle) < world.radius:
        robot.holding = True
        robot.ee_pose[:3] = world.handle  # the soft hand centres the handle

    for e in script.due(tick, world, robot):
        if e.kind == "shift_cabinet":
            world.p = world.p + e.value
            if robot.holding and np.linalg.norm(robot.ee_pose[:3] - world.handle) > cfg.slip:
                robot.holding = False
        elif e.kind == "strip_from_hand":
            robot.holding = False
            robot.ee_pose[:3] = robot.ee_pose[:3] + np.asarray(cfg.strip_shove, dtype=float)
        else:
            script.noise_scale = float(e.value)

    s = script.noise_scale
    b = render_bearing(world, robot, cfg.sigma_bearing * s, rng, cfg)
    force = rng.normal(0.0, cfg.sigma_ft * s, size=6)
    if robot.holding:
        R, _ = pose_to_matrix(robot.ee_pose)
        force[:3] += cfg.spring * (world.handle - robot.ee_pose[:3]) + cfg.preload * R[:, 2]
    odom = robot.ee_pose.copy()
    odom[:3] += rng.normal(0.0, cfg.sigma_odom * s, size=3)
    odom[3:] += rng.normal(0.0, cfg.sigma_odom_rot * s, size=3)
    hand = robot.hand + rng.normal(0.0, cfg.sigma_hand * s)
    frame = SensorFrame(b is not None, np.zeros(2) if b is None else b, force, odom, float(hand), c1 or c2 or c3)
    return world, robot, frame


FRAME_COLUMNS = ["tick", "q_true", "qx", "qy", "qz", "qw", "x", "y", "z", "holding",
                 "bearing_valid", "bearing_u", "bearing_v", "ft_norm"]


def frame_row(tick: int, world: DrawerWorld, robot: RobotTruth, frame: SensorFrame) -> list:
    quat = quaternion_xyzw(robot.ee_pose)
    return [tick, repr(world.q), *(repr(float(v)) for v in quat), *(repr(float(v)) for v in robot.ee_pose[:3]),
            int(robot.holding), int(frame.bearing_valid), repr(float(frame.bearing[0])),
            repr(float(frame.bearing[1])), repr(float(np.linalg.norm(frame.ft[:3])))]


def write_frame_log(fh: IO[str], rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FRAME_COLUMNS)
    w.writerows(rows)
