"""Stack/unstack gradient chains and the discrete steepest-gradient executor."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .state import TABLE, Action, BwError, BwGoal, BwState, apply_action, clear_values


def bw_gradients(state: BwState, goal: BwGoal, normalization: str = "crisp") -> list[tuple[Action, float]]:
    """Magnitude of the steepest chain ending in each action.

    A goal term o(X,Y) that is not yet true emits the direct stack chain
    dg/do * c(X) c(Y).  Blocked participants emit unstack chains: the chain
    descends through c(X) (sensitivity 1, the mover is cleared first) or
    c(Y) (sensitivity c(X)) into the block Z resting on it, and recurses
    through c(Z) when Z is itself covered.  Each c -> o link contributes
    |dc/do| (1, or 1/|B| with the scaled normalization).  Table targets emit
    the unstack chain of the block itself.
    """
    n = len(state.blocks)
    c = clear_values(state, normalization)
    dc = 1.0 / n if normalization == "scaled" else 1.0
    on = state.on
    best: dict[Action, float] = {}

    def emit(action: Action, mag: float) -> None:
        if mag > best.get(action, 0.0):
            best[action] = mag

    def clear_demand(x: int, w: float, visited: frozenset) -> None:
        if w <= 0.0:
            return
        for z in np.flatnonzero(on[:, x] > 0):
            if z in visited:
                continue
            wz = w * dc * on[z, x]
            emit(Action("unstack", state.blocks[z]), wz * c[z])
            clear_demand(z, wz, visited | {z})

    active = goal.active(state)
    for (bx, by), on_term in zip(goal.pairs, active):
        if not on_term:
            continue
        x = state.index(bx)
        if by == TABLE:
            for z in np.flatnonzero(on[x] > 0):
                w = on[x].sum() * on[x, z]
                emit(Action("unstack", bx), w * c[x])
                clear_demand(x, w, frozenset({x}))
            continue
        y = state.index(by)
        w = 1.0 - on[x, y]
        if w <= 0.0:
            continue
        emit(Action("stack", bx, by), w * c[x] * c[y])
        clear_demand(x, w, frozenset({x}))
        clear_demand(y, w * c[x], frozenset({y}))
    return sorted(best.items(), key=lambda kv: str(kv[0]))


def _feasible(state: BwState, action: Action) -> bool:
    try:
        apply_action(state, action)
    except BwError:
        return False
    return True


@dataclass
class Solution:
    actions: list = field(default_factory=list)
    steps: int = 0
    status: str = "solved"
    costs: list = field(default_factory=list)
    final: BwState | None = None

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "action", "arguments", "goal_cost"])
        for i, (a, cost) in enumerate(zip(self.actions, self.costs[1:]), start=1):
            args = a.block if a.target is None else f"{a.block} {a.target}"
            w.writerow([i, a.kind, args, repr(cost)])


def solve(
    initial: BwState,
    goal: BwGoal,
    seed: int = 0,
    step_cap: int | None = None,
    epsilon: float = 1e-9,
    tie_break: str = "random",
) -> Solution:
    """Repeatedly execute the action of the steepest gradient chain."""
    if not initial.crisp:
        raise BwError("solve needs a crisp initial state")
    goal.check_blocks(initial)
    cap = 4 * len(initial.blocks) if step_cap is None else step_cap
    if cap < 1:
        raise BwError("step_cap must be >= 1")
    rng = np.random.default_rng(seed)
    state = initial.copy()
    sol = Solution(costs=[goal.cost(state)])
    while not goal.reached(state):
        if sol.steps >= cap:
            sol.status = "step_cap_exceeded"
            break
        grads = bw_gradients(state, goal)
        top = max((m for _, m in grads), default=0.0)
        if top <= epsilon:
            sol.status = "stationary"
            break
        tied = [a for a, m in grads if m >= top * (1 - 1e-12)]
        action = tied[0] if len(tied) == 1 or tie_break == "lexicographic" else tied[rng.integers(len(tied))]
        if not _feasible(state, action):
            raise BwError(f"selected infeasible action {action}")
        state = apply_action(state, action)
        sol.actions.append(action)
        sol.steps += 1
        sol.costs.append(goal.cost(state))
    sol.final = state
    return sol
