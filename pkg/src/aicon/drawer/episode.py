"""Closed-loop drawer episodes: the gradient interpreter, its ablations and two planners."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from ..geometry import axis_from_angles
from ..graph import (
    Graph,
    descend,
    descend_sum,
    enumerate_gradient_paths,
    evaluate_paths,
    select_steepest,
    sum_paths,
)
from .network import build_drawer_network, behavior_label, drawer_goal
from .scenario import Scenario
from .sim import ScenarioError, sim_step

MODES = ("full", "sum_gradients", "frozen_interconnections", "baseline_state_space", "baseline_belief_space")
GATES = ("p_visible", "p_grasped", "s_drawer")
SUCCESS_TOL = 0.01
SUSTAIN = 20

TRACE_COLUMNS = ["tick", "behavior_label", "goal_cost", "p_visible", "p_grasped", "trace_sigma_drawer",
                 "trace_sigma_joint", "q_true", "q_est", *(f"a_ee_{i}" for i in range(6)), "a_hand"]


@dataclass
class EpisodeResult:
    mode: str
    seed: int
    success: bool
    status: str
    ticks: int
    final_q_error: float
    jerk: float
    behavior_trace: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    ee_positions: list = field(default_factory=list)
    events: list = field(default_factory=list)  # ticks at which disturbances fired

    def write_trace(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows:
            w.writerow([r[0], r[1], *(repr(float(v)) for v in r[2:])])


class _Loop:
    """Shared sim -> estimate bookkeeping for every mode."""

    def __init__(self, scenario: Scenario, seed: int, freeze: bool = False):
        self.scenario = scenario
        self.sim_cfg = scenario.sim_config()
        self.cfg = scenario.network_config()
        self.world = scenario.world()
        self.robot = scenario.robot()
        self.script = scenario.script()
        self.prior = scenario.prior(seed)
        self.graph: Graph = build_drawer_network(self.prior, self.cfg)
        if freeze:
            self.graph.freeze(GATES)
        self.goal = drawer_goal(self.cfg)
        self.rng = np.random.default_rng(seed)
        self.tick = 0
        self.jerk = 0.0
        self.prev_a = np.zeros(6)
        self.rows: list = []
        self.labels: list = []
        self.ee: list = []
        self.fired: list = []
        self.settled = 0

    def sense(self):
        g = self.graph
        commands = {"ee_twist": g.values["a_ee"], "hand_rate": float(g.values["a_hand"][0])}
        before = len(self.script.fired)
        self.world, self.robot, frame = sim_step(self.world, self.robot, commands, self.script, self.tick,
                                                 self.rng, self.sim_cfg)
        if len(self.script.fired) > before:
            self.fired.append(self.tick)
        g.tick({"z_ee": frame.ee_odom, "z_hand": [frame.hand], "z_ft": frame.ft, "z_rgb": frame.rgb_vector()})
        self.tick += 1

    def command(self, a_ee, a_hand) -> None:
        c = self.sim_cfg
        a_ee = np.asarray(a_ee, dtype=float).copy()
        for sl, lim in ((slice(0, 3), c.max_linear), (slice(3, 6), c.max_angular)):
            n = float(np.linalg.norm(a_ee[sl]))
            if n > lim:
                a_ee[sl] *= lim / n
        a_hand = float(np.clip(a_hand, -c.max_hand_rate, c.max_hand_rate))
        self.graph.values["a_ee"] = a_ee
        self.graph.values["a_hand"] = np.array([a_hand])

    def record(self, label: str) -> bool:
        """Log the tick; True once the estimated goal has held for long enough."""
        g = self.graph
        a = g.values["a_ee"]
        self.jerk += float(np.linalg.norm(a - self.prev_a))
        self.prev_a = a.copy()
        cost = float(self.goal.cost([g.values["x_joint"]]))
        self.labels.append(label)
        self.ee.append(self.robot.ee_pose[:3].copy())
        self.rows.append([self.tick, label, cost, g.values["p_visible"][0], g.values["p_grasped"][0],
                          np.trace(g.covariances["x_drawer"]), np.trace(g.covariances["x_joint"]),
                          self.world.q, g.values["x_joint"][2], *a, g.values["a_hand"][0]])
        self.settled = self.settled + 1 if cost < self.goal.threshold else 0
        return self.settled >= SUSTAIN

    def result(self, mode: str, seed: int, finished: bool) -> EpisodeResult:
        err = abs(self.world.q - self.cfg.goal_q)
        success = finished and err < SUCCESS_TOL
        if success:
            status = "success"
        elif finished:
            status = "converged_off_target"
        else:
            status = "tick_cap"
        return EpisodeResult(mode, seed, success, status, self.tick, err, self.jerk, self.labels, self.rows,
                             self.ee, self.fired)


def _gradient_loop(scenario: Scenario, mode: str, seed: int, stop_at: int | None = None):
    loop = _Loop(scenario, seed, freeze=mode == "frozen_interconnections")
    g = loop.graph
    paths = enumerate_gradient_paths(g, loop.goal, max_depth=6)
    names = {p.id: behavior_label(p.nodes) for p in paths}
    select_rng = np.random.default_rng([seed, 5])
    gains = {k: np.asarray(v, dtype=float) for k, v in scenario.gains.items()}
    finished = False
    cap = scenario.tick_cap if stop_at is None else min(stop_at, scenario.tick_cap)
    while loop.tick < cap:
        loop.sense()
        evaluated = evaluate_paths(g, loop.goal, paths)
        sel = select_steepest(evaluated, "random", select_rng, scenario.epsilon)
        label = names[sel.path.id] if sel.path is not None else "idle"
        if mode == "sum_gradients":
            descend_sum(g, sum_paths(evaluated), gains, retention=0.0)
        else:
            descend(g, sel, gains, decay=0.5, retention=0.0)
        loop.command(g.values["a_ee"], g.values["a_hand"][0])
        if loop.record(label):
            finished = True
            break
    return loop, finished


def _run_gradient(scenario: Scenario, mode: str, seed: int) -> EpisodeResult:
    loop, finished = _gradient_loop(scenario, mode, seed)
    return loop.result(mode, seed, finished)


def snapshot(scenario: Scenario, seed: int, tick: int, mode: str = "full"):
    """Replay an episode up to ``tick`` and return ``(graph, goal, world)`` at that point."""
    if mode not in ("full", "sum_gradients", "frozen_interconnections"):
        raise ScenarioError(f"snapshots need a gradient mode, not {mode!r}")
    if tick < 1:
        raise ScenarioError("snapshot tick must be >= 1")
    loop, _ = _gradient_loop(scenario, mode, seed, stop_at=tick)
    return loop.graph, loop.goal, loop.world


# --- scripted planners -------------------------------------------------------


class _Script:
    """Waypoint executor on top of the shared estimators (no replanning)."""

    def __init__(self, loop: _Loop, gain: float = 4.0):
        self.loop = loop
        self.gain = gain
        self.finished = False

    def step(self, a_ee, a_hand, label) -> bool:
        self.loop.command(a_ee, a_hand)
        if self.loop.record(label):
            self.finished = True
        return self.finished or self.loop.tick >= self.loop.scenario.tick_cap

    def goto(self, target, label, tol=0.003, hand=0.0) -> bool:
        loop = self.loop
        target = np.asarray(target, dtype=float)
        while True:
            loop.sense()
            err = target - loop.graph.values["x_ee"][:3]
            a = np.concatenate([self.gain * err, np.zeros(3)])
            if np.linalg.norm(err) < tol:
                a[:] = 0.0
            if self.step(a, hand, label):
                return False
            if np.linalg.norm(err) < tol:
                return True

    def dwell(self, n, label, hand=0.0) -> bool:
        for _ in range(n):
            self.loop.sense()
            if self.step(np.zeros(6), hand, label):
                return False
        return True

    def close_hand(self) -> bool:
        loop = self.loop
        while loop.graph.values["x_hand"][0] > 0.05:
            loop.sense()
            if self.step(np.zeros(6), -loop.sim_cfg.max_hand_rate, "grasp"):
                return False
        return self.dwell(3, "grasp")

    def pull_until(self, direction_fn, done_fn, speed=0.1) -> bool:
        loop = self.loop
        while True:
            loop.sense()
            if done_fn():
                self.step(np.zeros(6), 0.0, "open")
                return True
            a = np.concatenate([speed * direction_fn(), np.zeros(3)])
            if self.step(a, 0.0, "open"):
                return False

    def settle(self) -> None:
        self.dwell(SUSTAIN, "open")


def _run_state_space(scenario: Scenario, seed: int) -> EpisodeResult:
    loop = _Loop(scenario, seed)
    s = _Script(loop)
    handle0 = loop.prior.handle.copy()
    u0 = axis_from_angles(loop.prior.phi, loop.prior.theta)
    goal_q = loop.cfg.goal_q
    ok = s.goto(handle0, "approach") and s.close_hand()
    if ok:
        start = loop.graph.values["x_ee"][:3].copy()
        end = start + goal_q * u0
        ok = s.goto(end, "open", tol=0.002)
    if ok:
        s.settle()
    return loop.result("baseline_state_space", seed, ok)


def _run_belief_space(scenario: Scenario, seed: int) -> EpisodeResult:
    loop = _Loop(scenario, seed)
    s = _Script(loop)
    g = loop.graph
    handle0 = loop.prior.handle.copy()
    ok = True
    for off in scenario.belief_viewpoints:
        ok = ok and s.goto(handle0 + np.asarray(off, dtype=float), "look_around", tol=0.005) and s.dwell(10, "look_around")
    ok = ok and s.goto(g.values["x_drawer"].copy(), "approach") and s.close_hand()

    def axis():
        return axis_from_angles(g.values["x_joint"][0], g.values["x_joint"][1])

    for _ in range(2):
        if not ok:
            break
        start = g.values["x_ee"][:3].copy()
        ok = s.goto(start + 0.03 * axis(), "open", tol=0.002) and s.goto(start, "open", tol=0.002)
    if ok:
        ok = s.pull_until(axis, lambda: g.values["x_joint"][2] >= loop.cfg.goal_q)
    if ok:
        s.settle()
    return loop.result("baseline_belief_space", seed, ok)


def run_episode(scenario: Scenario, mode: str = "full", seed: int = 0) -> EpisodeResult:
    if mode not in MODES:
        raise ScenarioError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    if mode == "baseline_state_space":
        return _run_state_space(scenario, seed)
    if mode == "baseline_belief_space":
        return _run_belief_space(scenario, seed)
    return _run_gradient(scenario, mode, seed)


def phases(labels) -> list[tuple[str, int, int]]:
    """Collapse a per-tick label sequence into (label, first, last) runs."""
    out = []
    for i, lab in enumerate(labels):
        if out and out[-1][0] == lab:
            out[-1] = (lab, out[-1][1], i)
        else:
            out.append((lab, i, i))
    return out
