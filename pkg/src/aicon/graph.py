"""Component/connection graph and the steepest-gradient action interpreter.

A :class:`Graph` holds quantity nodes (estimates, sensors, actuators),
active connections between them, and components that recursively update
one estimate each from the contributions of their connections.  Once per
tick all connections are evaluated on the previous values and every
component is stepped.  Action selection enumerates chain-rule paths from a
goal's target quantities to the actuators, multiplies the partial
derivatives along each path, and descends only along the steepest one.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import IO

import numpy as np

logger = logging.getLogger(__name__)

KINDS = ("estimate", "sensor", "actuator")

Array = np.ndarray


class GraphError(ValueError):
    """Raised for malformed topologies and invalid tick inputs."""


def _as_vector(value) -> Array:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise GraphError(f"expected a vector, got shape {arr.shape}")
    return arr.copy()


def check_covariance(cov: Array, name: str = "covariance", atol: float = 1e-9) -> None:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise GraphError(f"{name}: covariance must be square, got {cov.shape}")
    if not np.allclose(cov, cov.T, atol=atol, rtol=0.0):
        raise GraphError(f"{name}: covariance is not symmetric")
    if cov.size and np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -1e-10:
        raise GraphError(f"{name}: covariance has a negative eigenvalue")


@dataclass
class QuantityNode:
    """A named vector quantity; ``lower`` bounds actuator commands from below."""

    id: str
    value: Array
    kind: str = "estimate"
    covariance: Array | None = None
    lower: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GraphError(f"{self.id}: unknown kind {self.kind!r}")
        self.value = _as_vector(self.value)
        if self.covariance is not None:
            self.covariance = np.array(self.covariance, dtype=float)
            if self.covariance.shape != (self.dim, self.dim):
                raise GraphError(
                    f"{self.id}: covariance shape {self.covariance.shape} does not match dim {self.dim}"
                )
            check_covariance(self.covariance, self.id)

    @property
    def dim(self) -> int:
        return self.value.shape[0]


@dataclass
class ActiveConnection:
    """A differentiable relation between several quantities.

    ``evaluate(values)`` maps the input values (ordered as ``inputs``) to a
    contribution vector and ``jacobian(i, values)`` returns the partials of
    that contribution w.r.t. input ``i``.  With ``needs_covariance`` both
    callables receive the inputs' covariances as a second list argument.

    ``path_jacobian(i, values, upstream)`` is the sensitivity used when the
    connection sits inside a gradient path.  It defaults to ``jacobian``;
    connections whose output is multiplied by an action or a gate override
    it to evaluate the sensitivity of the intended regime change (e.g. with
    the candidate action at its unit value), given the upstream row
    gradient ``upstream``.
    """

    id: str
    inputs: Sequence[str]
    evaluate: Callable
    jacobian: Callable
    path_jacobian: Callable | None = None
    needs_covariance: bool = False

    def __post_init__(self):
        self.inputs = tuple(self.inputs)


def _additive_update(prev, contributions, covariance):
    out = prev.copy()
    for c in contributions:
        out = out + c
    return out, covariance


def _additive_jacobians(prev, contributions, covariance):
    eye = np.eye(prev.shape[0])
    return eye, [eye for _ in contributions]


@dataclass
class ComponentSpec:
    """Recursive estimator for the quantity ``state``.

    ``update(prev, contributions, covariance) -> (value, covariance)`` is the
    per-tick step; contributions arrive in the order of ``connections``.
    ``jacobians`` returns ``(d_new/d_prev, [d_new/d_contribution_j])`` for the
    mean.  ``path_jacobians`` (same signature) gives the sensitivities used
    in gradient paths; for filters this is the total derivative including
    the sensor's response to the action, which is usually the prediction
    Jacobian.  The default component adds all contributions to the state.
    """

    state: str
    connections: Sequence[str]
    update: Callable = _additive_update
    jacobians: Callable = _additive_jacobians
    path_jacobians: Callable | None = None

    def __post_init__(self):
        self.connections = tuple(self.connections)


@dataclass(frozen=True)
class GradientPath:
    """One chain-rule route from a goal target to an actuator.

    ``factors`` alternates ``(component_state, connection_id)`` and
    ``(connection_id, input_index)`` steps; ``nodes`` lists the quantities
    visited, target first and actuator last.
    """

    goal_id: str
    target: str
    factors: tuple
    nodes: tuple
    actuator_id: str

    @property
    def id(self) -> str:
        parts = [self.target]
        for (conn, idx), node in zip(self.factors[1::2], self.nodes[1:]):
            parts.append(f"{conn}>{node}")
        return "<".join(parts)

    @property
    def connections(self) -> tuple:
        return tuple(conn for conn, _ in self.factors[1::2])


@dataclass
class Goal:
    """Differentiable non-negative cost over one or more target quantities."""

    id: str
    targets: Sequence[str]
    cost: Callable[[list], float]
    cost_gradient: Callable[[list], list]
    threshold: float = 0.0

    def __post_init__(self):
        if isinstance(self.targets, str):
            self.targets = (self.targets,)
        self.targets = tuple(self.targets)


class Graph:
    """Immutable topology plus the current values of every quantity."""

    def __init__(self, nodes, connections, components):
        self.nodes: dict[str, QuantityNode] = {}
        self.connections: dict[str, ActiveConnection] = {}
        self.components: dict[str, ComponentSpec] = {}
        seen: set[str] = set()
        for item in list(nodes) + list(connections):
            if item.id in seen:
                raise GraphError(f"duplicate id {item.id!r}")
            seen.add(item.id)
        for n in nodes:
            self.nodes[n.id] = n
        for c in connections:
            for name in c.inputs:
                if name not in self.nodes:
                    raise GraphError(f"connection {c.id!r} references unknown node {name!r}")
            self.connections[c.id] = c
        for comp in components:
            if comp.state not in self.nodes:
                raise GraphError(f"component references unknown node {comp.state!r}")
            node = self.nodes[comp.state]
            if node.kind != "estimate":
                raise GraphError(f"component state {comp.state!r} must be an estimate node")
            if comp.state in self.components:
                raise GraphError(f"duplicate component for {comp.state!r}")
            for cid in comp.connections:
                if cid not in self.connections:
                    raise GraphError(f"component {comp.state!r} references unknown connection {cid!r}")
            self.components[comp.state] = comp

        self.values: dict[str, Array] = {k: n.value.copy() for k, n in self.nodes.items()}
        self.covariances: dict[str, Array | None] = {
            k: None if n.covariance is None else n.covariance.copy() for k, n in self.nodes.items()
        }
        self.contributions: dict[str, Array] = {}
        self.tick_count = 0
        self.frozen: dict[str, Array] = {}
        self._check_dimensions()
        # connections first, then components; components only read
        # previous-tick state, so cross-tick cycles are allowed
        self.order = [("connection", cid) for cid in self.connections] + [
            ("component", sid) for sid in self.components
        ]

    def _check_dimensions(self) -> None:
        for comp in self.components.values():
            prev = self.values[comp.state]
            contribs = [self._evaluate(cid) for cid in comp.connections]
            try:
                new, _ = comp.update(prev, contribs, self.covariances[comp.state])
            except Exception as exc:
                raise GraphError(f"component {comp.state!r} rejects its contributions: {exc}") from exc
            if np.shape(new) != prev.shape:
                raise GraphError(
                    f"component {comp.state!r} changes dimension {prev.shape} -> {np.shape(new)}"
                )
            self.contributions.update(zip(comp.connections, contribs))

    def _inputs(self, conn: ActiveConnection):
        vals = [self.frozen.get(n, self.values[n]) for n in conn.inputs]
        if conn.needs_covariance:
            return vals, [self.covariances[n] for n in conn.inputs]
        return (vals,)

    def _evaluate(self, cid: str) -> Array:
        conn = self.connections[cid]
        try:
            out = conn.evaluate(*self._inputs(conn))
        except Exception as exc:  # surfaced with the offending id
            raise GraphError(f"connection {cid!r} failed to evaluate: {exc}") from exc
        return np.atleast_1d(np.asarray(out, dtype=float))

    @property
    def sensors(self) -> list[str]:
        return [k for k, n in self.nodes.items() if n.kind == "sensor"]

    @property
    def actuators(self) -> list[str]:
        return [k for k, n in self.nodes.items() if n.kind == "actuator"]

    def freeze(self, node_ids: Sequence[str]) -> None:
        """Pin the listed quantities to their current values as seen by connections."""
        for nid in node_ids:
            self.frozen[nid] = self.values[nid].copy()

    def set_value(self, node_id: str, value) -> None:
        value = _as_vector(value)
        if value.shape != self.values[node_id].shape:
            raise GraphError(f"{node_id}: dimension is fixed at {self.values[node_id].shape[0]}")
        self.values[node_id] = value

    def set_covariance(self, node_id: str, cov) -> None:
        cov = np.asarray(cov, dtype=float)
        check_covariance(cov, node_id, atol=1e-8)
        self.covariances[node_id] = 0.5 * (cov + cov.T)

    # --- per-tick operations -------------------------------------------------

    def tick(self, sensor_values: Mapping[str, object]) -> dict[str, Array]:
        expected = set(self.sensors)
        given = set(sensor_values)
        if given != expected:
            missing = sorted(expected - given)
            extra = sorted(given - expected)
            raise GraphError(f"sensor mismatch: missing={missing} extra={extra}")
        for sid, val in sensor_values.items():
            self.set_value(sid, val)
        contribs = {cid: self._evaluate(cid) for cid in self.connections}
        new_values = {}
        new_covs = {}
        for sid, comp in self.components.items():
            args = [contribs[c] for c in comp.connections]
            val, cov = comp.update(self.values[sid], args, self.covariances[sid])
            new_values[sid] = _as_vector(val)
            new_covs[sid] = cov
        for sid, val in new_values.items():
            if val.shape != self.values[sid].shape:
                raise GraphError(f"component {sid!r} changed dimension")
            self.values[sid] = val
            if new_covs[sid] is not None:
                self.covariances[sid] = np.asarray(new_covs[sid], dtype=float)
        self.contributions = contribs
        self.tick_count += 1
        return {k: v.copy() for k, v in new_values.items()}

    def refresh_contributions(self) -> None:
        """Re-evaluate every connection at the current values (no state update)."""
        self.contributions = {cid: self._evaluate(cid) for cid in self.connections}

    def component_path_jacobian(self, state: str, cid: str, memo: dict | None = None) -> Array:
        """``memo`` may be shared across calls while the graph state is unchanged."""
        memo = {} if memo is None else memo
        if ("comp", state) not in memo:
            comp = self.components[state]
            contribs = [self.contributions[c] if c in self.contributions else self._evaluate(c)
                        for c in comp.connections]
            fn = comp.path_jacobians or comp.jacobians
            _, d_contribs = fn(self.values[state], contribs, self.covariances[state])
            memo[("comp", state)] = dict(zip(comp.connections, d_contribs))
        return np.atleast_2d(np.asarray(memo[("comp", state)][cid], dtype=float))

    def connection_path_jacobian(self, cid: str, index: int, upstream: Array, memo: dict | None = None) -> Array:
        conn = self.connections[cid]
        if conn.path_jacobian is not None:
            # may depend on the upstream row, so never memoised
            jac = conn.path_jacobian(index, *self._inputs(conn), upstream)
        else:
            key = ("conn", cid, index)
            if memo is None or key not in memo:
                jac = conn.jacobian(index, *self._inputs(conn))
                if memo is not None:
                    memo[key] = jac
            else:
                jac = memo[key]
        return np.atleast_2d(np.asarray(jac, dtype=float))


def register_graph(nodes, connections, components) -> Graph:
    return Graph(nodes, connections, components)


def enumerate_gradient_paths(graph: Graph, goal: Goal, max_depth: int = 6) -> list[GradientPath]:
    """All simple chains from the goal's targets to actuators.

    ``max_depth`` counts quantities on the chain, target and actuator
    included.  Chains that enter a connection through a gating input are
    enumerated like any other input.
    """
    if max_depth < 1:
        raise GraphError("max_depth must be >= 1")
    for t in goal.targets:
        if t not in graph.nodes:
            raise GraphError(f"goal {goal.id!r} references unknown node {t!r}")
    paths: list[GradientPath] = []

    def walk(node_id, nodes, factors, target):
        comp = graph.components.get(node_id)
        if comp is None or len(nodes) >= max_depth:
            return
        for cid in comp.connections:
            conn = graph.connections[cid]
            for idx, nxt in enumerate(conn.inputs):
                if nxt in nodes:
                    continue
                kind = graph.nodes[nxt].kind
                step = factors + ((node_id, cid), (cid, idx))
                if kind == "actuator":
                    paths.append(GradientPath(goal.id, target, step, nodes + (nxt,), nxt))
                elif kind == "estimate":
                    walk(nxt, nodes + (nxt,), step, target)

    for target in goal.targets:
        walk(target, (target,), (), target)
    return paths


@dataclass
class EvaluatedPath:
    path: GradientPath
    gradient: Array
    magnitude: float


def _goal_inputs(graph: Graph, goal: Goal) -> list:
    return [graph.values[t] for t in goal.targets]


def evaluate_paths(graph: Graph, goal: Goal, paths: Sequence[GradientPath]) -> list[EvaluatedPath]:
    """Multiply each path's factors left to right at the current values.

    Gradient entries that would push an actuator below its lower bound are
    projected out before the norm is taken.
    """
    grads = goal.cost_gradient(_goal_inputs(graph, goal))
    start = {t: np.atleast_2d(np.asarray(g, dtype=float)) for t, g in zip(goal.targets, grads)}
    cache: dict[tuple, Array] = {}
    memo: dict = {}
    out = []
    for path in paths:
        row = start[path.target]
        key: tuple = (path.target,)
        for k in range(0, len(path.factors), 2):
            state, cid = path.factors[k]
            _, idx = path.factors[k + 1]
            key = key + (cid, idx)
            if key in cache:
                row = cache[key]
                continue
            if not np.any(row):
                cache[key] = row = np.zeros((1, graph.nodes[graph.connections[cid].inputs[idx]].dim))
                continue
            row = row @ graph.component_path_jacobian(state, cid, memo)
            row = row @ graph.connection_path_jacobian(cid, idx, row, memo)
            cache[key] = row
        grad = row.ravel().copy()
        node = graph.nodes[path.actuator_id]
        if node.lower is not None:
            at_bound = graph.values[path.actuator_id] <= node.lower + 1e-12
            grad[at_bound & (grad > 0)] = 0.0
        out.append(EvaluatedPath(path, grad, float(np.linalg.norm(grad))))
    return out


@dataclass
class Selection:
    status: str  # "selected" | "stationary"
    path: GradientPath | None = None
    gradient: Array | None = None
    magnitude: float = 0.0


def select_steepest(
    evaluated: Sequence[EvaluatedPath],
    tie_break: str = "lexicographic",
    rng: np.random.Generator | None = None,
    epsilon: float = 0.0,
    scores: Sequence[float] | None = None,
) -> Selection:
    """Pick the path of maximal magnitude.

    ``scores`` overrides the magnitudes used for the comparison (e.g.
    gain-scaled norms).  When every score is below ``epsilon`` the result
    has status ``"stationary"``.
    """
    if not evaluated:
        raise ValueError("select_steepest needs at least one evaluated path")
    mags = np.array([e.magnitude for e in evaluated] if scores is None else scores, dtype=float)
    best = mags.max()
    if best < epsilon or best == 0.0:
        return Selection("stationary")
    tied = np.flatnonzero(mags >= best * (1.0 - 1e-12))
    if len(tied) == 1:
        idx = int(tied[0])
    elif tie_break == "lexicographic":
        idx = int(min(tied, key=lambda i: evaluated[i].path.id))
    elif tie_break == "random":
        if rng is None:
            raise ValueError("random tie-break needs an rng")
        ordered = sorted(tied, key=lambda i: evaluated[i].path.id)
        idx = int(ordered[rng.integers(len(ordered))])
    else:
        raise ValueError(f"unknown tie-break policy {tie_break!r}")
    e = evaluated[idx]
    return Selection("selected", e.path, e.gradient, e.magnitude)


def descend(
    graph: Graph,
    selection: Selection,
    gains: Mapping[str, object],
    decay: float = 0.5,
    retention: float = 1.0,
) -> dict[str, Array]:
    """Gain-weighted descent on the selected actuator; the rest decay to zero.

    ``retention`` multiplies the selected actuator's previous command;
    1.0 gives the plain update ``a - k * grad``.
    """
    missing = [a for a in graph.actuators if a not in gains]
    if missing:
        raise GraphError(f"no gain for actuators {missing}")
    new = {}
    for aid in graph.actuators:
        a = graph.values[aid]
        if selection.status == "selected" and selection.path.actuator_id == aid:
            k = np.broadcast_to(np.asarray(gains[aid], dtype=float), a.shape)
            new[aid] = retention * a - k * selection.gradient
        else:
            new[aid] = decay * a
        node = graph.nodes[aid]
        if node.lower is not None:
            new[aid] = np.maximum(new[aid], node.lower)
        graph.values[aid] = new[aid]
    return new


def sum_paths(evaluated: Sequence[EvaluatedPath]) -> dict[str, Array]:
    """Per-actuator sum of all path gradients (the no-selection ablation)."""
    total: dict[str, Array] = {}
    for e in evaluated:
        aid = e.path.actuator_id
        total[aid] = total.get(aid, 0.0) + e.gradient
    return total


def descend_sum(graph: Graph, summed: Mapping[str, Array], gains, retention: float = 1.0):
    new = {}
    for aid in graph.actuators:
        a = graph.values[aid]
        k = np.broadcast_to(np.asarray(gains[aid], dtype=float), a.shape)
        new[aid] = retention * a - k * summed.get(aid, np.zeros_like(a))
        node = graph.nodes[aid]
        if node.lower is not None:
            new[aid] = np.maximum(new[aid], node.lower)
        graph.values[aid] = new[aid]
    return new


# --- engine ----------------------------------------------------------------


@dataclass
class EngineConfig:
    gains: dict
    epsilon: float = 1e-4
    max_depth: int = 6
    tie_break: str = "random"
    seed: int = 0
    decay: float = 0.5
    retention: float = 1.0
    compare: str = "raw"  # or "gain_scaled"

    def __post_init__(self):
        for aid, k in self.gains.items():
            if np.any(np.asarray(k, dtype=float) <= 0):
                raise GraphError(f"gain for {aid!r} must be positive")
        if self.max_depth < 1:
            raise GraphError("max_depth must be >= 1")
        if self.tie_break not in ("random", "lexicographic"):
            raise GraphError(f"unknown tie_break {self.tie_break!r}")
        if self.compare not in ("raw", "gain_scaled"):
            raise GraphError(f"unknown compare mode {self.compare!r}")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "EngineConfig":
        eng = dict(data.get("engine", {}))
        gains = {k: np.asarray(v, dtype=float) for k, v in data.get("gains", {}).items()}
        return cls(gains=gains, **eng)


@dataclass
class TickRecord:
    tick: int
    goal_cost: float
    status: str
    selected_path: str
    magnitudes: dict = field(default_factory=dict)


class Engine:
    """tick -> evaluate -> select -> descend, with paths enumerated once."""

    def __init__(self, graph: Graph, goal: Goal, config: EngineConfig):
        self.graph = graph
        self.goal = goal
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.paths = enumerate_gradient_paths(graph, goal, config.max_depth)
        self.records: list[TickRecord] = []

    def goal_cost(self) -> float:
        return float(self.goal.cost(_goal_inputs(self.graph, self.goal)))

    def step(self, sensor_values: Mapping[str, object] | None = None) -> TickRecord:
        self.graph.tick(sensor_values or {})
        evaluated = evaluate_paths(self.graph, self.goal, self.paths) if self.paths else []
        cost = self.goal_cost()
        if evaluated:
            scores = None
            if self.config.compare == "gain_scaled":
                scores = [
                    float(np.linalg.norm(np.asarray(self.config.gains[e.path.actuator_id]) * e.gradient))
                    for e in evaluated
                ]
            sel = select_steepest(evaluated, self.config.tie_break, self.rng, self.config.epsilon, scores)
        else:
            sel = Selection("stationary")
        descend(self.graph, sel, self.config.gains, self.config.decay, self.config.retention)
        status = sel.status
        if status == "stationary" and cost <= self.goal.threshold:
            status = "success"
        rec = TickRecord(
            self.graph.tick_count,
            cost,
            status,
            sel.path.id if sel.path is not None else "",
            {e.path.id: e.magnitude for e in evaluated},
        )
        self.records.append(rec)
        return rec

    def write_trace(self, fh: IO[str]) -> None:
        write_trace(fh, self.records, [p.id for p in self.paths])


def write_trace(fh: IO[str], records: Sequence[TickRecord], path_ids: Sequence[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["tick", "goal_cost", "selected_path", *path_ids])
    for r in records:
        w.writerow([r.tick, repr(float(r.goal_cost)), r.selected_path,
                    *(repr(float(r.magnitudes.get(p, 0.0))) for p in path_ids)])
