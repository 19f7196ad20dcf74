import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aicon.blocksworld import BwGoal, BwState
from aicon.blocksworld.network import bw_goal, build_bw_graph, o_id, stack_id
from aicon.graph import (
    ActiveConnection,
    ComponentSpec,
    Engine,
    EngineConfig,
    EvaluatedPath,
    Goal,
    GradientPath,
    GraphError,
    QuantityNode,
    descend,
    enumerate_gradient_paths,
    evaluate_paths,
    register_graph,
    select_steepest,
    Selection,
)


def linear_conn(cid, inputs, weights):
    weights = [np.atleast_2d(w) for w in weights]
    return ActiveConnection(
        cid,
        inputs,
        lambda v: sum(w @ x for w, x in zip(weights, v)),
        lambda i, v: weights[i],
    )


def quad_goal(target, ref=0.0, threshold=0.0):
    return Goal(
        "g",
        target,
        lambda v: float(0.5 * np.sum((v[0] - ref) ** 2)),
        lambda v: [np.atleast_2d(v[0] - ref)],
        threshold,
    )


def smallest_graph(x0=1.0):
    nodes = [QuantityNode("x", [x0]), QuantityNode("a", [0.0], kind="actuator")]
    conns = [linear_conn("move", ["a"], [[[1.0]]])]
    return register_graph(nodes, conns, [ComponentSpec("x", ["move"])])


# --- registration --------------------------------------------------------------


def test_smallest_graph():
    g = smallest_graph()
    assert g.order == [("connection", "move"), ("component", "x")]


def test_unknown_node_named():
    nodes = [QuantityNode("x", [0.0])]
    with pytest.raises(GraphError, match="x_ghost"):
        register_graph(nodes, [linear_conn("c", ["x_ghost"], [[[1.0]]])], [])


def test_duplicate_id_named():
    with pytest.raises(GraphError, match="'x'"):
        register_graph([QuantityNode("x", [0.0]), QuantityNode("x", [1.0])], [], [])


def test_dimension_mismatch_named():
    nodes = [QuantityNode("x", [0.0, 0.0]), QuantityNode("a", [0.0], kind="actuator")]
    conns = [linear_conn("c", ["a"], [[[1.0]]])]
    grow = lambda prev, contribs, cov: (np.zeros(3), cov)
    with pytest.raises(GraphError, match="'x'"):
        register_graph(nodes, conns, [ComponentSpec("x", ["c"], update=grow)])
    conns = [linear_conn("c", ["a"], [np.ones((3, 1))])]
    with pytest.raises(GraphError, match="'x'"):
        register_graph(nodes, conns, [ComponentSpec("x", ["c"])])


def test_covariance_validation():
    with pytest.raises(GraphError, match="symmetric"):
        QuantityNode("x", [0, 0], covariance=[[1, 0.5], [0, 1]])
    with pytest.raises(GraphError, match="negative"):
        QuantityNode("x", [0, 0], covariance=[[1, 0], [0, -1]])


# --- tick ----------------------------------------------------------------------


def test_static_state_survives_tick():
    nodes = [QuantityNode("x", [3.0, -1.0])]
    g = register_graph(nodes, [], [ComponentSpec("x", [])])
    g.tick({})
    assert np.array_equal(g.values["x"], [3.0, -1.0])


def test_tick_requires_exact_sensors():
    nodes = [QuantityNode("x", [0.0]), QuantityNode("z", [0.0], kind="sensor")]
    g = register_graph(nodes, [linear_conn("m", ["z"], [[[1.0]]])], [ComponentSpec("x", ["m"])])
    with pytest.raises(GraphError, match="missing=\\['z'\\]"):
        g.tick({})
    with pytest.raises(GraphError, match="extra=\\['q'\\]"):
        g.tick({"z": [1.0], "q": [0.0]})
    g.tick({"z": [2.0]})
    assert g.values["x"][0] == 2.0


def test_connections_read_previous_tick():
    # x <- y and y <- 1 : x sees y's old value
    nodes = [QuantityNode("x", [0.0]), QuantityNode("y", [0.0]), QuantityNode("one", [1.0], kind="sensor")]
    conns = [linear_conn("xy", ["y"], [[[1.0]]]), linear_conn("y1", ["one"], [[[1.0]]])]
    g = register_graph(nodes, conns, [ComponentSpec("x", ["xy"]), ComponentSpec("y", ["y1"])])
    g.tick({"one": [1.0]})
    assert (g.values["x"][0], g.values["y"][0]) == (0.0, 1.0)
    g.tick({"one": [1.0]})
    assert (g.values["x"][0], g.values["y"][0]) == (1.0, 2.0)


def test_bw_graph_stack_tick():
    s = BwState.from_towers([["A"], ["B"]])
    g = build_bw_graph(s)
    g.set_value(stack_id("B", "A"), [1.0])
    g.tick({})
    assert g.values[o_id("B", "A")][0] == pytest.approx(1.0)


# --- paths ---------------------------------------------------------------------


def test_single_path():
    g = smallest_graph()
    paths = enumerate_gradient_paths(g, quad_goal("x"))
    assert len(paths) == 1 and len(paths[0].factors) == 2
    assert paths[0].actuator_id == "a"


def test_max_depth_and_simple_paths():
    nodes = [QuantityNode("x", [1.0]), QuantityNode("y", [0.0]), QuantityNode("a", [0.0], kind="actuator")]
    conns = [linear_conn("xy", ["y", "x"], [[[1.0]], [[0.5]]]), linear_conn("ya", ["a", "x"], [[[2.0]], [[1.0]]])]
    g = register_graph(nodes, conns, [ComponentSpec("x", ["xy"]), ComponentSpec("y", ["ya"])])
    paths = enumerate_gradient_paths(g, quad_goal("x"), max_depth=3)
    assert [p.nodes for p in paths] == [("x", "y", "a")]
    assert enumerate_gradient_paths(g, quad_goal("x"), max_depth=2) == []
    with pytest.raises(GraphError):
        enumerate_gradient_paths(g, quad_goal("x"), max_depth=0)


def test_path_product_matches_chain_rule():
    nodes = [QuantityNode("x", [1.0]), QuantityNode("y", [0.0]), QuantityNode("a", [0.0], kind="actuator")]
    conns = [linear_conn("xy", ["y"], [[[3.0]]]), linear_conn("ya", ["a"], [[[2.0]]])]
    g = register_graph(nodes, conns, [ComponentSpec("x", ["xy"]), ComponentSpec("y", ["ya"])])
    goal = quad_goal("x")
    (e,) = evaluate_paths(g, goal, enumerate_gradient_paths(g, goal))
    assert e.gradient == pytest.approx([1.0 * 3.0 * 2.0])


def test_bw_paths_include_stack_and_unstack():
    s = BwState.from_towers([["R", "B"], ["O"]])
    g = build_bw_graph(s)
    goal = bw_goal(BwGoal((("R", "O"),)), s)
    acts = {p.actuator_id for p in enumerate_gradient_paths(g, goal)}
    assert {"stack(R,O)", "unstack(B,R)"} <= acts


def test_satisfied_goal_zero_magnitudes():
    g = smallest_graph(x0=0.0)
    goal = quad_goal("x")
    assert all(e.magnitude == 0 for e in evaluate_paths(g, goal, enumerate_gradient_paths(g, goal)))


def test_lower_bound_projection():
    nodes = [QuantityNode("x", [1.0]), QuantityNode("a", [0.0], kind="actuator", lower=0.0)]
    g = register_graph(nodes, [linear_conn("m", ["a"], [[[1.0]]])], [ComponentSpec("x", ["m"])])
    goal = quad_goal("x")
    (e,) = evaluate_paths(g, goal, enumerate_gradient_paths(g, goal))
    # descending would need a < 0
    assert e.magnitude == 0.0


# --- selection and descent -----------------------------------------------------


def fake(mags, ids=None):
    ids = ids or [f"p{i}" for i in range(len(mags))]
    return [
        EvaluatedPath(GradientPath("g", "x", (("x", "c"), ("c", 0)), ("x", pid), pid), np.array([m]), m)
        for m, pid in zip(mags, ids)
    ]


def test_select_unique_max():
    sel = select_steepest(fake([0.0, 0.7, 0.2]))
    assert sel.path.actuator_id == "p1"


def test_select_lexicographic_tie():
    sel = select_steepest(fake([1.0, 1.0, 1.0], ["b", "a", "c"]), "lexicographic")
    assert sel.path.actuator_id == "a"


def test_select_random_tie_is_seeded():
    ev = fake([1.0] * 5)
    pick = lambda s: select_steepest(ev, "random", np.random.default_rng(s)).path.id
    assert [pick(3) for _ in range(3)] == [pick(3)] * 3


def test_select_stationary():
    assert select_steepest(fake([1e-6, 2e-5]), epsilon=1e-4).status == "stationary"
    with pytest.raises(ValueError):
        select_steepest([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-200, 1e3)), min_size=1, max_size=12), st.floats(1e-3, 1e3))
def test_select_scale_invariant(mags, scale):
    a = select_steepest(fake(mags), "lexicographic")
    b = select_steepest(fake([m * scale for m in mags]), "lexicographic")
    assert a.status == b.status
    if a.status == "selected":
        assert a.path.id == b.path.id


def test_descend_examples():
    nodes = [QuantityNode("x", [0.0, 0, 0]), QuantityNode("a", [0.0, 0, 0], kind="actuator"),
             QuantityNode("b", [2.0], kind="actuator")]
    conns = [linear_conn("m", ["a", "b"], [np.eye(3), np.ones((3, 1))])]
    g = register_graph(nodes, conns, [ComponentSpec("x", ["m"])])
    path = GradientPath("g", "x", (), ("x", "a"), "a")
    descend(g, Selection("selected", path, np.array([1.0, 0, 0]), 1.0), {"a": 0.5, "b": 1.0})
    assert np.array_equal(g.values["a"], [-0.5, 0, 0])
    assert g.values["b"][0] == 1.0  # decayed by 0.5
    descend(g, Selection("stationary"), {"a": 0.5, "b": 1.0})
    assert np.array_equal(g.values["a"], [-0.25, 0, 0])
    with pytest.raises(GraphError, match="no gain"):
        descend(g, Selection("stationary"), {"a": 0.5})


def test_nonpositive_gain_rejected():
    with pytest.raises(GraphError, match="positive"):
        EngineConfig(gains={"a": 0.0})
    with pytest.raises(GraphError, match="positive"):
        EngineConfig.from_mapping({"gains": {"a": [1.0, -1.0]}})


def test_quadratic_descent_converges():
    # q_{t+1} = q_t + a_t with a_t = -k (q_t - q*) (retention 0): the error shrinks by (1 - k) per tick
    nodes = [QuantityNode("q", [1.0]), QuantityNode("a", [0.0], kind="actuator")]
    g = register_graph(nodes, [linear_conn("m", ["a"], [[[1.0]]])], [ComponentSpec("q", ["m"])])
    goal = quad_goal("q", ref=0.2, threshold=1e-10)
    eng = Engine(g, goal, EngineConfig({"a": 0.3}, epsilon=1e-8, tie_break="lexicographic", retention=0.0))
    errs = []
    for _ in range(40):
        eng.step()
        errs.append(abs(g.values["q"][0] - 0.2))
    assert errs == pytest.approx([0.8 * 0.7**t for t in range(40)], abs=1e-12)
    halved = next(t for t, v in enumerate(errs) if v <= 0.4)
    assert halved == 2  # 0.7^2 < 0.5 < 0.7


def test_engine_success_and_trace():
    g = smallest_graph(x0=1e-9)
    eng = Engine(g, quad_goal("x", threshold=1e-6), EngineConfig({"a": 1.0}))
    rec = eng.step()
    assert rec.status == "success"
    buf = io.StringIO()
    eng.write_trace(buf)
    header, row = buf.getvalue().splitlines()
    assert header == "tick,goal_cost,selected_path,x<move>a"
    assert row.startswith("1,")


def test_engine_never_succeeds_above_threshold():
    g = smallest_graph(x0=1.0)
    nodes_goal = quad_goal("x", threshold=0.0)
    eng = Engine(g, nodes_goal, EngineConfig({"a": 1e-9}, epsilon=10.0))
    assert eng.step().status == "stationary"


def test_engine_is_reproducible():
    def run():
        s = BwState.from_towers([["A", "B", "C"], ["D"]])
        g = build_bw_graph(s)
        goal = bw_goal(BwGoal((("A", "D"),)), s)
        eng = Engine(g, goal, EngineConfig({a: 1.0 for a in g.actuators}, seed=7))
        for _ in range(5):
            eng.step()
        buf = io.StringIO()
        eng.write_trace(buf)
        return buf.getvalue()

    assert run() == run()
