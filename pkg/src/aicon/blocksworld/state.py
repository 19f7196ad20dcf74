"""Blocks World states, goals, likelihood dynamics and the instance file format."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TABLE = "table"


class BwError(ValueError):
    pass


@dataclass(frozen=True)
class Action:
    kind: str  # "stack" | "unstack"
    block: str
    target: str | None = None

    def __str__(self) -> str:
        if self.kind == "stack":
            return f"stack({self.block},{self.target})"
        return f"unstack({self.block})"


@dataclass
class BwState:
    """``on[i, j]`` is the likelihood that ``blocks[i]`` rests directly on ``blocks[j]``."""

    blocks: tuple
    on: np.ndarray
    crisp: bool = True
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.blocks = tuple(self.blocks)
        if len(set(self.blocks)) != len(self.blocks):
            raise BwError("duplicate block ids")
        if TABLE in self.blocks:
            raise BwError(f"{TABLE!r} is reserved")
        self.on = np.array(self.on, dtype=float)
        n = len(self.blocks)
        if self.on.shape != (n, n):
            raise BwError(f"on-matrix must be {n}x{n}")
        self._index = {b: i for i, b in enumerate(self.blocks)}
        if self.crisp:
            self.check_crisp()

    @classmethod
    def from_towers(cls, towers) -> "BwState":
        blocks = [b for t in towers for b in t]
        st = cls(tuple(blocks), np.zeros((len(blocks), len(blocks))))
        for tower in towers:
            for lower, upper in zip(tower, tower[1:]):
                st.on[st.index(upper), st.index(lower)] = 1.0
        st.check_crisp()
        return st

    def index(self, block: str) -> int:
        try:
            return self._index[block]
        except KeyError:
            raise BwError(f"unknown block {block!r}") from None

    def copy(self) -> "BwState":
        return BwState(self.blocks, self.on.copy(), self.crisp)

    def check_crisp(self) -> None:
        if not np.all((self.on == 0) | (self.on == 1)):
            raise BwError("crisp state has non-binary entries")
        if np.any(np.diag(self.on)):
            raise BwError("a block cannot be on itself")
        if np.any(self.on.sum(axis=1) > 1) or np.any(self.on.sum(axis=0) > 1):
            raise BwError("a block supports or rests on more than one block")
        for b in self.blocks:
            seen = set()
            cur = b
            while cur is not None:
                if cur in seen:
                    raise BwError(f"cycle in on-relation through {b!r}")
                seen.add(cur)
                cur = self.support(cur)

    def support(self, block: str) -> str | None:
        row = self.on[self.index(block)]
        j = int(np.argmax(row))
        return self.blocks[j] if row[j] > 0.5 else None

    def above(self, block: str) -> str | None:
        col = self.on[:, self.index(block)]
        i = int(np.argmax(col))
        return self.blocks[i] if col[i] > 0.5 else None

    def towers(self) -> list[list[str]]:
        out = []
        for b in self.blocks:
            if self.support(b) is None:
                tower = [b]
                while (nxt := self.above(tower[-1])) is not None:
                    tower.append(nxt)
                out.append(tower)
        return out

    def key(self) -> tuple:
        return tuple(self.support(b) or TABLE for b in self.blocks)


def clear_values(state: BwState, normalization: str = "crisp") -> np.ndarray:
    load = state.on.sum(axis=0)
    if normalization == "scaled":
        return 1.0 - load / len(state.blocks)
    if normalization == "crisp":
        return 1.0 - load
    raise BwError(f"unknown normalization {normalization!r}")


def clear_of(state: BwState, block: str, normalization: str = "scaled") -> float:
    """Likelihood that nothing rests on ``block``."""
    return float(clear_values(state, normalization)[state.index(block)])


def apply_action(state: BwState, action: Action) -> BwState:
    """Execute one move on a crisp state.

    ``stack(X,Y)`` raises o(X,Y) by c(X)c(Y) = 1 and releases X's previous
    support; ``unstack(X)`` lowers o(X, support) by c(X) = 1, leaving X on
    the table.  The result is snapped back to {0, 1}.
    """
    if not state.crisp:
        raise BwError("apply_action executes crisp states only")
    c = clear_values(state, "crisp")
    new = state.copy()
    x = state.index(action.block)
    if action.kind == "stack":
        if action.target is None or action.target == TABLE:
            raise BwError(f"{action}: stack needs a block target")
        y = state.index(action.target)
        if x == y:
            raise BwError(f"{action}: cannot stack a block on itself")
        if c[x] < 1 or c[y] < 1:
            raise BwError(f"{action}: both blocks must be clear")
        new.on[x, :] = 0.0
        new.on[x, y] = state.on[x, y] + c[x] * c[y]
    elif action.kind == "unstack":
        below = state.support(action.block)
        if c[x] < 1:
            raise BwError(f"{action}: block is not clear")
        if below is None:
            raise BwError(f"{action}: block is already on the table")
        y = state.index(below)
        new.on[x, y] = state.on[x, y] - c[x]
    else:
        raise BwError(f"unknown action kind {action.kind!r}")
    new.on = np.clip(np.round(new.on), 0.0, 1.0)
    new.check_crisp()
    return new


@dataclass
class BwGoal:
    """Required ``(X, Y)`` relations; ``Y`` may be the table."""

    pairs: tuple
    mode: str = "naive"

    def __post_init__(self):
        self.pairs = tuple((str(x), str(y)) for x, y in self.pairs)
        if self.mode not in ("naive", "interconnected"):
            raise BwError(f"unknown goal mode {self.mode!r}")
        sup: dict[str, str] = {}
        held: dict[str, str] = {}
        for x, y in self.pairs:
            if x == y:
                raise BwError(f"goal puts {x!r} on itself")
            if x in sup and sup[x] != y:
                raise BwError(f"goal requires {x!r} on both {sup[x]!r} and {y!r}")
            sup[x] = y
            if y != TABLE:
                if y in held and held[y] != x:
                    raise BwError(f"goal puts both {held[y]!r} and {x!r} on {y!r}")
                held[y] = x
        for x in sup:
            seen = {x}
            cur = sup.get(x)
            while cur is not None and cur != TABLE:
                if cur in seen:
                    raise BwError(f"goal has a cycle through {x!r}")
                seen.add(cur)
                cur = sup.get(cur)
        self.support = sup

    def with_mode(self, mode: str) -> "BwGoal":
        return BwGoal(self.pairs, mode)

    def check_blocks(self, state: BwState) -> None:
        for x, y in self.pairs:
            state.index(x)
            if y != TABLE:
                state.index(y)

    def satisfied(self, state: BwState, x: str, y: str) -> bool:
        return (state.support(x) or TABLE) == y

    def well_placed(self, state: BwState, block: str, _memo=None) -> bool:
        """Block sits on its goal support and so does everything below it."""
        memo = {} if _memo is None else _memo
        if block in memo:
            return memo[block]
        want = self.support.get(block)
        if want is None:
            res = True
        elif want == TABLE:
            res = state.support(block) is None
        else:
            res = state.support(block) == want and self.well_placed(state, want, memo)
        memo[block] = res
        return res

    def active(self, state: BwState, memo=None) -> list[bool]:
        """Per-pair activity; naive goals keep every term active."""
        if self.mode == "naive":
            return [True] * len(self.pairs)
        memo = {} if memo is None else memo
        return [y == TABLE or self.well_placed(state, y, memo) for _, y in self.pairs]

    def cost(self, state: BwState) -> float:
        """Sum of 0.5*(1 - o(X,Y))^2 over block targets and 0.5*(sum_Z o(X,Z))^2 over table targets."""
        total = 0.0
        for x, y in self.pairs:
            i = state.index(x)
            if y == TABLE:
                total += 0.5 * state.on[i].sum() ** 2
            else:
                total += 0.5 * (1.0 - state.on[i, state.index(y)]) ** 2
        return float(total)

    def reached(self, state: BwState) -> bool:
        return all(self.satisfied(state, x, y) for x, y in self.pairs)


# --- instance files ----------------------------------------------------------


@dataclass
class BwProblem:
    initial: BwState
    goal: BwGoal
    id: str = ""


def parse_instance(text: str, name: str = "") -> BwProblem:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or not lines[0].startswith("blocks:"):
        raise BwError(f"{name}: first line must be 'blocks: N'")
    count = int(lines[0].split(":", 1)[1])
    towers = []
    pairs = []
    in_goal = False
    for ln in lines[1:]:
        if ln.startswith("goal:"):
            in_goal = True
            continue
        if in_goal:
            parts = ln.split()
            if len(parts) != 3 or parts[0] != "on":
                raise BwError(f"{name}: bad goal line {ln!r}")
            pairs.append((parts[1], parts[2]))
        else:
            towers.append(ln.split())
    state = BwState.from_towers(towers)
    if len(state.blocks) != count:
        raise BwError(f"{name}: declared {count} blocks, found {len(state.blocks)}")
    goal = BwGoal(tuple(pairs))
    goal.check_blocks(state)
    return BwProblem(state, goal, name)


def format_instance(state: BwState, goal: BwGoal) -> str:
    out = [f"blocks: {len(state.blocks)}"]
    out += [" ".join(t) for t in state.towers()]
    out.append("goal:")
    out += [f"on {x} {y}" for x, y in goal.pairs]
    return "\n".join(out) + "\n"


def load_instance(path) -> BwProblem:
    path = Path(path)
    return parse_instance(path.read_text(), path.stem)
