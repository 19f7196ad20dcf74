"""Scenario files (TOML) and the built-in presets."""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .network import DrawerPrior, NetworkConfig
from .sim import DisturbanceEvent, DisturbanceScript, DrawerWorld, RobotTruth, ScenarioError, SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_EE = [0.25, 0.0, 0.35, 0.0, np.pi / 2, 0.0]  # grasp frame looking along +x


@dataclass
class Scenario:
    name: str = "nominal"
    handle: tuple = (0.6, 0.0, 0.3)
    phi: float = np.pi
    theta: float = np.pi / 2
    q_max: float = 0.35
    radius: float = 0.03
    ee_start: tuple = tuple(DEFAULT_EE)
    hand_start: float = 1.0
    prior_offset: float = 0.005  # distance of the prior handle mean from the truth
    prior_sigma: float = 0.005
    axis_offset: float = 0.0  # radians added to the prior azimuth
    axis_sigma: float = 0.05
    noise_scale: float = 1.0
    tick_cap: int = 3000
    events: list = field(default_factory=list)
    gains: dict = field(default_factory=lambda: {"a_ee": 20.0, "a_hand": 200.0})
    epsilon: float = 1e-6
    sim: dict = field(default_factory=dict)
    network: dict = field(default_factory=dict)
    belief_viewpoints: list = field(
        default_factory=lambda: [[-0.3, 0.12, 0.05], [-0.3, -0.12, 0.05], [-0.25, 0.0, 0.15]]
    )

    def __post_init__(self):
        if len(self.handle) != 3 or len(self.ee_start) != 6:
            raise ScenarioError(f"{self.name}: handle needs 3 numbers and ee_start 6")
        if self.prior_sigma <= 0 or self.noise_scale <= 0:
            raise ScenarioError(f"{self.name}: prior_sigma and noise_scale must be positive")
        if self.tick_cap < 1:
            raise ScenarioError(f"{self.name}: tick_cap must be >= 1")
        known = {f.name for f in fields(SimConfig)}
        bad = set(self.sim) - known
        if bad:
            raise ScenarioError(f"{self.name}: unknown sim keys {sorted(bad)}")
        known = {f.name for f in fields(NetworkConfig)}
        bad = set(self.network) - known
        if bad:
            raise ScenarioError(f"{self.name}: unknown network keys {sorted(bad)}")
        self.events = [e if isinstance(e, DisturbanceEvent) else DisturbanceEvent(**e) for e in self.events]
        DisturbanceScript(list(self.events))

    # --- builders ------------------------------------------------------

    def sim_config(self) -> SimConfig:
        return SimConfig(**self.sim)

    def network_config(self) -> NetworkConfig:
        sim = self.sim_config()
        base = dict(
            dt=sim.dt,
            camera_offset=sim.camera_offset,
            fov_half_angle=sim.fov_half_angle,
            spring=sim.spring,
            preload=sim.preload,
            # filters assume twice the sensor noise to stay consistent through linearisation
            sigma_bearing=2 * sim.sigma_bearing * self.noise_scale,
            sigma_odom=sim.sigma_odom * self.noise_scale,
            sigma_odom_rot=sim.sigma_odom_rot * self.noise_scale,
            sigma_hand=sim.sigma_hand * self.noise_scale,
            sigma_grip=max(0.003, 2 * sim.sigma_ft * self.noise_scale / sim.spring),
        )
        base.update(self.network)
        return NetworkConfig(**base)

    def world(self) -> DrawerWorld:
        return DrawerWorld(np.array(self.handle, dtype=float), self.phi, self.theta, 0.0, self.q_max, self.radius)

    def robot(self) -> RobotTruth:
        return RobotTruth(np.array(self.ee_start, dtype=float), self.hand_start, False)

    def script(self) -> DisturbanceScript:
        return DisturbanceScript(copy.deepcopy(self.events), noise_scale=self.noise_scale)

    def prior(self, seed: int) -> DrawerPrior:
        """Prior belief; the offset direction is drawn from the seed."""
        rng = np.random.default_rng([seed, 17])
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        handle = np.array(self.handle, dtype=float) + self.prior_offset * direction
        return DrawerPrior(
            ee_pose=np.array(self.ee_start, dtype=float),
            hand=self.hand_start,
            handle=handle,
            handle_cov=self.prior_sigma**2 * np.eye(3),
            phi=self.phi + self.axis_offset,
            theta=self.theta,
            axis_sigma=self.axis_sigma,
        )

    # --- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "events":
                v = [{k: (w.tolist() if isinstance(w, np.ndarray) else w) for k, w in vars(e).items()
                      if w is not None} for e in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def scenario_from_mapping(data: dict, base: Scenario | None = None) -> Scenario:
    preset = data.get("preset")
    start = PRESETS[preset]() if preset else (base or Scenario())
    merged = start.to_dict()
    known = set(merged)
    for k, v in data.items():
        if k == "preset":
            continue
        if k not in known:
            raise ScenarioError(f"unknown scenario key {k!r}")
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = {**merged[k], **v}
        else:
            merged[k] = v
    for k in ("handle", "ee_start"):
        merged[k] = tuple(merged[k])
    return Scenario(**merged)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    data.setdefault("name", path.stem)
    return scenario_from_mapping(data)


def load_conditions(path) -> list[Scenario]:
    """A conditions file holds one ``[[condition]]`` table per scenario."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"conditions file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    conds = data.get("condition")
    if not conds:
        raise ScenarioError(f"{path}: no [[condition]] tables")
    out = [scenario_from_mapping(c) for c in conds]
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise ScenarioError(f"{path}: duplicate condition names")
    return out


def nominal() -> Scenario:
    return Scenario(name="nominal")


def wide() -> Scenario:
    return Scenario(name="wide", prior_offset=0.04, prior_sigma=0.05, noise_scale=3.0)


def disturbance() -> Scenario:
    return Scenario(name="disturbance", events=[{"kind": "strip_from_hand", "when_q": 0.1}])


def shifted() -> Scenario:
    return Scenario(name="shifted", events=[{"kind": "shift_cabinet", "tick": 5, "value": [0.0, 0.05, 0.0]}])


PRESETS = {"nominal": nominal, "wide": wide, "disturbance": disturbance, "shifted": shifted}

# three start poses used by the ablation sweep
ABLATION_STARTS = [
    tuple(DEFAULT_EE),
    (0.22, 0.08, 0.38, 0.0, np.pi / 2, 0.0),
    (0.25, -0.08, 0.30, 0.0, np.pi / 2, 0.0),
]


def ablation_conditions() -> list[Scenario]:
    out = []
    for base in ("nominal", "wide"):
        for i, start in enumerate(ABLATION_STARTS):
            s = PRESETS[base]()
            s.name = f"{base}_start{i}"
            s.ee_start = start
            out.append(s)
    return out
