"""Episode sweeps over conditions x modes x trials, and potential-field sampling."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import IO

import numpy as np

from ..graph import enumerate_gradient_paths, evaluate_paths, select_steepest
from .episode import MODES, EpisodeResult, phases, run_episode, snapshot
from .network import behavior_label
from .scenario import Scenario
from .sim import ScenarioError

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ["condition", "mode", "trial", "seed", "success", "status", "ticks", "final_q_error", "jerk",
                 "look_around_ticks", "look_around_drop", "reacquired", "phases"]


@dataclass
class DrawerRecord:
    condition: str
    mode: str
    trial: int
    seed: int
    success: bool
    status: str
    ticks: int
    final_q_error: float
    jerk: float
    look_around_ticks: int
    look_around_drop: float | None  # relative trace drop over the first look-around phase
    reacquired: bool  # approach or grasp selected after a disturbance fired
    phases: str

    def row(self) -> list:
        drop = "" if self.look_around_drop is None else repr(self.look_around_drop)
        return [self.condition, self.mode, self.trial, self.seed, int(self.success), self.status, self.ticks,
                repr(self.final_q_error), repr(self.jerk), self.look_around_ticks, drop, int(self.reacquired),
                self.phases]


def look_around_drop(result: EpisodeResult) -> float | None:
    """1 - trace(end)/trace(start) over the first look-around phase, from the logged rows."""
    for label, a, b in phases(result.behavior_trace):
        if label == "look_around":
            start, end = result.rows[a][5], result.rows[b][5]
            return float(1.0 - end / start) if start > 0 else None
    return None


def reacquired(result: EpisodeResult) -> bool:
    if not result.events:
        return False
    first = result.events[0]
    return any(lab in ("approach", "grasp") for lab in result.behavior_trace[first:])


def record_of(condition: str, trial: int, result: EpisodeResult) -> DrawerRecord:
    runs = phases(result.behavior_trace)
    return DrawerRecord(
        condition, result.mode, trial, result.seed, result.success, result.status, result.ticks,
        float(result.final_q_error), float(result.jerk),
        sum(1 for lab in result.behavior_trace if lab == "look_around"),
        look_around_drop(result), reacquired(result),
        ">".join(lab for lab, _, _ in runs),
    )


def _run_cell(args) -> DrawerRecord:
    scenario, mode, trial, seed = args
    return record_of(scenario.name, trial, run_episode(scenario, mode, seed))


def run_drawer_bench(conditions: list[Scenario], modes, trials: int, seed: int, workers: int = 1):
    """Every (condition, mode, trial) cell; trial ``k`` uses episode seed ``seed + k``.

    Returns ``(records, summary)``; records come back in cell order whatever the worker count.
    """
    modes = list(modes)
    bad = [m for m in modes if m not in MODES]
    if bad:
        raise ScenarioError(f"unknown modes {bad}; expected a subset of {', '.join(MODES)}")
    if trials < 1:
        raise ScenarioError("trials must be >= 1")
    if not conditions:
        raise ScenarioError("no conditions given")
    cells = [(sc, m, k, seed + k) for sc in conditions for m in modes for k in range(trials)]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_cell, cells))
    else:
        records = [_run_cell(c) for c in cells]
    return records, summarize(records)


def summarize(records) -> dict:
    out: dict = {}
    keys = []
    for r in records:
        if (r.condition, r.mode) not in keys:
            keys.append((r.condition, r.mode))
    for cond, mode in keys:
        rs = [r for r in records if r.condition == cond and r.mode == mode]
        drops = [r.look_around_drop for r in rs if r.look_around_drop is not None]
        out.setdefault(cond, {})[mode] = {
            "runs": len(rs),
            "successes": sum(r.success for r in rs),
            "success_rate": sum(r.success for r in rs) / len(rs),
            "mean_ticks": float(np.mean([r.ticks for r in rs])),
            "mean_jerk": float(np.mean([r.jerk for r in rs])),
            "mean_final_q_error": float(np.mean([r.final_q_error for r in rs])),
            "min_look_around_drop": min(drops) if drops else None,
            "reacquired": sum(r.reacquired for r in rs),
        }
    return out


def write_results(fh: IO[str], records) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in records:
        w.writerow(r.row())


def read_results(path) -> list[DrawerRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != BENCH_COLUMNS:
            raise ScenarioError(f"{path}: unexpected columns {reader.fieldnames}")
        rows = list(reader)
    return [
        DrawerRecord(r["condition"], r["mode"], int(r["trial"]), int(r["seed"]), r["success"] == "1",
                     r["status"], int(r["ticks"]), float(r["final_q_error"]), float(r["jerk"]),
                     int(r["look_around_ticks"]),
                     float(r["look_around_drop"]) if r["look_around_drop"] else None,
                     r["reacquired"] == "1", r["phases"])
        for r in rows
    ]


# --- potential field --------------------------------------------------------

WORKSPACE_LO = np.array([0.0, -0.5, 0.0])
WORKSPACE_HI = np.array([1.0, 0.5, 0.8])
_AXES = {"x": 0, "y": 1, "z": 2}
FIELD_COLUMNS = ["u", "v", "label", "magnitude", "grad_x", "grad_y", "grad_z", "grad_hand"]


@dataclass
class Plane:
    """Grid over two world axes; the third coordinate stays at the snapshot EE position."""

    axes: str = "xz"
    lo: tuple = (0.2, 0.1)
    hi: tuple = (0.8, 0.6)
    n: tuple = (13, 11)

    def __post_init__(self):
        if len(self.axes) != 2 or self.axes[0] == self.axes[1] or set(self.axes) - set(_AXES):
            raise ScenarioError(f"plane axes must be two of x, y, z, got {self.axes!r}")
        if min(self.n) < 1:
            raise ScenarioError("grid needs at least one point per axis")
        if any(h < l for l, h in zip(self.lo, self.hi)):
            raise ScenarioError("grid upper bound below lower bound")

    def points(self) -> list[tuple[float, float]]:
        lo, hi = np.array(self.lo, dtype=float), np.array(self.hi, dtype=float)
        i0, i1 = _AXES[self.axes[0]], _AXES[self.axes[1]]
        wl, wh = WORKSPACE_LO[[i0, i1]], WORKSPACE_HI[[i0, i1]]
        if np.any(lo < wl) or np.any(hi > wh):
            logger.warning("grid %s..%s leaves the workspace; clipped to %s..%s", lo, hi, wl, wh)
            lo, hi = np.clip(lo, wl, wh), np.clip(hi, wl, wh)
        us = np.linspace(lo[0], hi[0], self.n[0])
        vs = np.linspace(lo[1], hi[1], self.n[1])
        return [(float(u), float(v)) for v in vs for u in us]


def sample_potential_field(graph, goal, plane: Plane, seed: int = 0) -> list[list]:
    """Place the EE at each grid point, re-evaluate the gates and report the steepest path.

    The graph is restored afterwards.
    """
    paths = enumerate_gradient_paths(graph, goal, max_depth=6)
    names = {p.id: behavior_label(p.nodes) for p in paths}
    saved_vals = {k: v.copy() for k, v in graph.values.items()}
    saved_contribs = dict(graph.contributions)
    i0, i1 = _AXES[plane.axes[0]], _AXES[plane.axes[1]]
    rng = np.random.default_rng(seed)
    rows = []
    try:
        for u, v in plane.points():
            for k in ("x_ee", "z_ee"):
                pose = saved_vals[k].copy()
                pose[i0], pose[i1] = u, v
                graph.values[k] = pose
            # gates follow the virtual pose, estimators keep their snapshot state
            graph.refresh_contributions()
            for gate, cid in (("p_visible", "c_vis"), ("p_grasped", "c_grasp"), ("s_drawer", "c_info")):
                graph.values[gate] = graph.contributions[cid].copy()
            graph.refresh_contributions()
            sel = select_steepest(evaluate_paths(graph, goal, paths), "random", rng, 0.0)
            grad = np.zeros(3)
            hand = 0.0
            label = "idle"
            if sel.path is not None:
                label = names[sel.path.id]
                if sel.path.actuator_id == "a_ee":
                    grad = sel.gradient[:3]
                else:
                    hand = float(sel.gradient[0])
            rows.append([repr(u), repr(v), label, repr(float(sel.magnitude)), *(repr(float(g)) for g in grad),
                         repr(hand)])
    finally:
        graph.values = saved_vals
        graph.contributions = saved_contribs
    return rows


def field_from_episode(scenario: Scenario, seed: int, tick: int, plane: Plane, mode: str = "full"):
    graph, goal, _ = snapshot(scenario, seed, tick, mode)
    return sample_potential_field(graph, goal, plane, seed)


def write_field(fh: IO[str], rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FIELD_COLUMNS)
    w.writerows(rows)
