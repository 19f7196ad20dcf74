import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aicon.blocksworld import (
    TABLE,
    Action,
    BwError,
    BwGoal,
    BwState,
    apply_action,
    bw_gradients,
    clear_of,
    format_instance,
    parse_instance,
    solve,
)
from aicon.blocksworld.network import bw_goal, build_bw_graph, graph_gradients

THREE_TOWERS = [["R", "G", "B"], ["O", "C"], ["orange", "magenta", "teal"]]


def three_towers():
    return BwState.from_towers(THREE_TOWERS), BwGoal((("R", "O"),))


def towers_strategy(max_blocks=6):
    @st.composite
    def build(draw):
        n = draw(st.integers(1, max_blocks))
        perm = draw(st.permutations([f"b{i}" for i in range(n)]))
        cuts = draw(st.sets(st.integers(1, max(1, n - 1)), max_size=n - 1)) if n > 1 else set()
        bounds = [0, *sorted(cuts), n]
        return [list(perm[a:b]) for a, b in zip(bounds, bounds[1:]) if b > a]

    return build()


def goal_for(towers) -> BwGoal:
    pairs = []
    for t in towers:
        pairs.append((t[0], TABLE))
        pairs += [(u, l) for l, u in zip(t, t[1:])]
    return BwGoal(tuple(pairs))


# --- state and dynamics --------------------------------------------------------


def test_clear_of_empty_matrix():
    s = BwState.from_towers([["A"], ["B"], ["C"]])
    assert all(clear_of(s, b) == 1.0 for b in "ABC")


def test_clear_of_normalizations():
    s = BwState.from_towers([["A", "B"], ["C"]])
    assert clear_of(s, "A", "scaled") == pytest.approx(2 / 3)
    assert clear_of(s, "A", "crisp") == 0.0
    with pytest.raises(BwError, match="unknown block"):
        clear_of(s, "Q")


def test_stack_and_unstack():
    s = BwState.from_towers([["A"], ["B"]])
    s2 = apply_action(s, Action("stack", "B", "A"))
    assert s2.on[s2.index("B"), s2.index("A")] == 1
    s3 = apply_action(s2, Action("unstack", "B"))
    assert s3.support("B") is None and not s3.on.any()


def test_stack_onto_covered_block_rejected():
    s = BwState.from_towers([["A", "C"], ["B"]])
    with pytest.raises(BwError, match="clear"):
        apply_action(s, Action("stack", "B", "A"))


def test_unstack_preconditions():
    s = BwState.from_towers([["A", "B"]])
    with pytest.raises(BwError, match="not clear"):
        apply_action(s, Action("unstack", "A"))
    with pytest.raises(BwError, match="table"):
        apply_action(BwState.from_towers([["A"]]), Action("unstack", "A"))


def test_state_invariants_rejected():
    with pytest.raises(BwError, match="cycle"):
        BwState(("A", "B"), np.array([[0, 1], [1, 0]]))
    with pytest.raises(BwError, match="more than one"):
        BwState(("A", "B", "C"), np.array([[0, 1, 1], [0, 0, 0], [0, 0, 0]]))


def test_goal_consistency():
    with pytest.raises(BwError, match="both"):
        BwGoal((("A", "B"), ("A", "C")))
    with pytest.raises(BwError, match="cycle"):
        BwGoal((("A", "B"), ("B", "A")))
    with pytest.raises(BwError, match="both"):
        BwGoal((("A", "C"), ("B", "C")))


def test_instance_roundtrip():
    s, g = three_towers()
    text = format_instance(s, g)
    p = parse_instance(text)
    assert p.initial.key() == s.key() and p.goal.pairs == g.pairs
    with pytest.raises(BwError, match="declared"):
        parse_instance(text.replace("blocks: 8", "blocks: 9"))


# --- gradients -----------------------------------------------------------------


def test_three_towers_first_action_is_unstack_b():
    s, g = three_towers()
    grads = dict(bw_gradients(s, g))
    top = max(grads.values())
    assert [a for a, m in grads.items() if m == top] == [Action("unstack", "B")]


def test_satisfied_goal_has_zero_gradient():
    s = BwState.from_towers([["A", "B"]])
    assert bw_gradients(s, BwGoal((("B", "A"),))) == []


def test_competing_stacks():
    # R, G, B on the table; goal G on R and B on G
    s = BwState.from_towers([["R"], ["G"], ["B"]])
    g = BwGoal((("G", "R"), ("B", "G")))
    grads = dict(bw_gradients(s, g))
    assert grads == {Action("stack", "G", "R"): 1.0, Action("stack", "B", "G"): 1.0}
    # stacking B first forces a backtrack: G must be cleared again
    s2 = apply_action(s, Action("stack", "B", "G"))
    assert dict(bw_gradients(s2, g)) == {Action("unstack", "B"): 1.0}
    # the interconnected goal only offers the bottom-up stack
    assert dict(bw_gradients(s, g.with_mode("interconnected"))) == {Action("stack", "G", "R"): 1.0}


def test_tower_unstacks_toward_clearing_g():
    s = BwState.from_towers([["B", "G", "R"]])
    g = BwGoal((("G", "R"), ("B", "G")))
    grads = dict(bw_gradients(s, g))
    assert all(a.kind == "unstack" for a in grads)
    assert Action("unstack", "R") in grads


def test_graph_route_matches_closed_form():
    s = BwState.from_towers([["A", "B", "C"], ["D"]])
    g = BwGoal((("C", "D"), ("A", "C"), ("B", TABLE), ("D", TABLE)))
    for mode in ("naive", "interconnected"):
        gm = g.with_mode(mode)
        graph = build_bw_graph(s)
        closed = {a: m for a, m in bw_gradients(s, gm) if m > 0}
        assert graph_gradients(graph, bw_goal(gm, s)) == pytest.approx(closed)


def test_scaled_normalization_keeps_feasible_stacks_on_top():
    s = BwState.from_towers([["A", "B"], ["C"], ["D"]])
    g = BwGoal((("C", "D"), ("A", "C")))
    scaled = dict(bw_gradients(s, g, "scaled"))
    stacks = {a: m for a, m in scaled.items() if a.kind == "stack"}
    top = max(stacks.values())
    assert [a for a, m in stacks.items() if m == top] == [Action("stack", "C", "D")]
    # the infeasible stack keeps a nonzero scaled-mode magnitude
    assert scaled[Action("stack", "A", "C")] > 0


# --- executor ------------------------------------------------------------------


def test_already_solved():
    s = BwState.from_towers([["A", "B"]])
    sol = solve(s, BwGoal((("B", "A"),)))
    assert sol.status == "solved" and sol.steps == 0


def test_three_towers_solution():
    s, g = three_towers()
    for seed in range(5):
        sol = solve(s, g, seed=seed)
        assert sol.status == "solved" and sol.steps == 4
        assert sol.actions[-1] == Action("stack", "R", "O")
        assert {str(a) for a in sol.actions[:3]} == {"unstack(B)", "unstack(G)", "unstack(C)"}


def test_solution_csv():
    s, g = three_towers()
    buf = io.StringIO()
    solve(s, g, seed=0).write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "step,action,arguments,goal_cost"
    assert lines[-1] == "4,stack,R O,0.0"


def test_step_cap():
    s = BwState.from_towers([["A", "B", "C", "D"]])
    sol = solve(s, goal_for([["D", "C", "B", "A"]]), step_cap=2)
    assert sol.status == "step_cap_exceeded" and sol.steps == 2
    with pytest.raises(BwError):
        solve(s, BwGoal((("Z", "A"),)))


@settings(max_examples=60, deadline=None)
@given(towers_strategy())
def test_unstacking_goal_solved_minimally(towers):
    s = BwState.from_towers(towers)
    g = BwGoal(tuple((b, TABLE) for b in s.blocks))
    sol = solve(s, g, seed=1)
    stacked = sum(1 for b in s.blocks if s.support(b) is not None)
    assert sol.status == "solved" and sol.steps == stacked
    assert all(a.kind == "unstack" for a in sol.actions)


@settings(max_examples=60, deadline=None)
@given(towers_strategy(), towers_strategy(), st.sampled_from(["naive", "interconnected"]), st.integers(0, 3))
def test_solve_trace_invariants(init, target, mode, seed):
    s = BwState.from_towers(init)
    names = sorted(s.blocks)
    tgt = [[names[int(b[1:])] for b in t if int(b[1:]) < len(names)] for t in target]
    tgt = [t for t in tgt if t]
    placed = {b for t in tgt for b in t}
    tgt += [[b] for b in names if b not in placed]
    g = goal_for(tgt).with_mode(mode)
    sol = solve(s, g, seed=seed, step_cap=40 * len(names))
    cur = s
    for a in sol.actions:
        if mode == "interconnected" and a.kind == "stack":
            assert g.well_placed(cur, a.target)
        cur = apply_action(cur, a)  # raises if a precondition failed
        cur.check_crisp()
    assert sol.status == "solved"
