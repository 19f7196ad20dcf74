"""Blocks World expressed as a component/connection graph.

Quantities: ``o(X,Y)`` and ``c(X)`` likelihood estimates, actuators
``stack(X,Y)`` and ``unstack(X,Y)``.  Each ``dyn(X,Y)`` connection carries
the per-tick change of o(X,Y); each ``clear(X)`` connection recomputes c(X)
from the on-likelihoods of the blocks resting on X.
"""

from __future__ import annotations

import numpy as np

from ..graph import ActiveConnection, ComponentSpec, Goal, Graph, QuantityNode, register_graph
from .state import TABLE, Action, BwGoal, BwState, clear_values


def o_id(x, y):
    return f"o({x},{y})"


def c_id(x):
    return f"c({x})"


def stack_id(x, y):
    return f"stack({x},{y})"


def unstack_id(x, y):
    return f"unstack({x},{y})"


def _dyn_eval(v):
    cx, cy, a_s, a_u, o = (float(t[0]) for t in v)
    return np.array([cx * cy * a_s - cx * o * a_u])


def _dyn_jac(i, v):
    cx, cy, a_s, a_u, o = (float(t[0]) for t in v)
    d = [cy * a_s - o * a_u, cx * a_s, cx * cy, -cx * o, -cx * a_u]
    return np.array([[d[i]]])


def _dyn_path_jac(i, v, upstream):
    # intended action from the upstream sign: raise o -> stack, lower o -> unstack
    cx, cy, a_s, a_u, o = (float(t[0]) for t in v)
    raise_o = float(upstream.ravel()[0]) < 0
    if i == 0:
        return np.array([[1.0 if raise_o else -o]])
    if i == 1:
        return np.array([[cx if raise_o else 0.0]])
    return _dyn_jac(i, v)


def _clear_connection(x, others, dc):
    def evaluate(v):
        return np.array([1.0 - dc * sum(float(t[0]) for t in v)])

    def jacobian(i, v):
        return np.array([[-dc]])

    return ActiveConnection(f"clear({x})", [o_id(z, x) for z in others], evaluate, jacobian)


def _replace_update(prev, contributions, covariance):
    return contributions[0].copy(), covariance


def _replace_jacobians(prev, contributions, covariance):
    return np.zeros((1, 1)), [np.eye(1)]


def build_bw_graph(state: BwState, normalization: str = "crisp") -> Graph:
    blocks = state.blocks
    n = len(blocks)
    dc = 1.0 / n if normalization == "scaled" else 1.0
    c = clear_values(state, normalization)
    nodes, conns, comps = [], [], []
    for i, x in enumerate(blocks):
        nodes.append(QuantityNode(c_id(x), [c[i]]))
        for j, y in enumerate(blocks):
            if i == j:
                continue
            nodes.append(QuantityNode(o_id(x, y), [state.on[i, j]]))
            nodes.append(QuantityNode(stack_id(x, y), [0.0], kind="actuator", lower=0.0))
            nodes.append(QuantityNode(unstack_id(x, y), [0.0], kind="actuator", lower=0.0))
            conns.append(
                ActiveConnection(
                    f"dyn({x},{y})",
                    [c_id(x), c_id(y), stack_id(x, y), unstack_id(x, y), o_id(x, y)],
                    _dyn_eval,
                    _dyn_jac,
                    _dyn_path_jac,
                )
            )
            comps.append(ComponentSpec(o_id(x, y), [f"dyn({x},{y})"]))
    for x in blocks:
        others = [z for z in blocks if z != x]
        conns.append(_clear_connection(x, others, dc))
        comps.append(ComponentSpec(c_id(x), [f"clear({x})"], _replace_update, _replace_jacobians))
    return register_graph(nodes, conns, comps)


def bw_goal(goal: BwGoal, state: BwState) -> Goal:
    """Graph goal with the same cost as :meth:`BwGoal.cost` (gates frozen at ``state``)."""
    targets: list[str] = []
    terms: list[tuple] = []
    active = goal.active(state)
    for (x, y), on_term in zip(goal.pairs, active):
        if y == TABLE:
            ids = [o_id(x, z) for z in state.blocks if z != x]
            terms.append(("table", len(targets), len(ids), on_term))
            targets += ids
        else:
            terms.append(("pair", len(targets), 1, on_term))
            targets.append(o_id(x, y))

    def cost(values):
        total = 0.0
        for kind, start, size, on_term in terms:
            if kind == "table":
                total += 0.5 * sum(float(values[k][0]) for k in range(start, start + size)) ** 2
            else:
                total += 0.5 * (1.0 - float(values[start][0])) ** 2
        return total

    def cost_gradient(values):
        grads = [np.zeros((1, 1)) for _ in targets]
        for kind, start, size, on_term in terms:
            if not on_term:
                continue
            if kind == "table":
                s = sum(float(values[k][0]) for k in range(start, start + size))
                for k in range(start, start + size):
                    grads[k] = np.array([[s]])
            else:
                grads[start] = np.array([[-(1.0 - float(values[start][0]))]])
        return grads

    return Goal("bw", targets, cost, cost_gradient)


def action_of_actuator(actuator_id: str) -> Action:
    name, args = actuator_id[:-1].split("(")
    x, y = args.split(",")
    return Action("stack", x, y) if name == "stack" else Action("unstack", x)


def graph_gradients(graph: Graph, goal: Goal, max_depth: int = 6) -> dict:
    """Per-action maximum path magnitude computed through the generic engine."""
    from ..graph import enumerate_gradient_paths, evaluate_paths

    paths = enumerate_gradient_paths(graph, goal, max_depth)
    best: dict[Action, float] = {}
    for e in evaluate_paths(graph, goal, paths):
        if e.magnitude <= 0:
            continue
        a = action_of_actuator(e.path.actuator_id)
        best[a] = max(best.get(a, 0.0), e.magnitude)
    return best
