"""Random instance corpora, optimal-length oracles and the variant benchmark."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np

from .state import TABLE, BwError, BwGoal, BwProblem, BwState, format_instance, load_instance
from .solver import solve

EXACT_MAX_BLOCKS = 8
EXACT_TIME_LIMIT = 60.0

RESULT_COLUMNS = ["instance_id", "variant", "seed", "solved", "steps", "bound_value", "bound_kind"]


@dataclass
class BwInstance:
    id: str
    initial: BwState
    goal: BwGoal
    goal_tower_count: int
    seed: int

    @property
    def block_count(self) -> int:
        return len(self.initial.blocks)


def _random_towers(blocks: list[str], towers: int, rng: np.random.Generator) -> list[list[str]]:
    """Random sequential placement into exactly ``towers`` stacks (0 or >= n: all on the table)."""
    n = len(blocks)
    order = [blocks[i] for i in rng.permutation(n)]
    if towers <= 0 or towers >= n:
        return [[b] for b in order]
    cuts = sorted(rng.choice(np.arange(1, n), size=towers - 1, replace=False).tolist())
    bounds = [0, *cuts, n]
    return [order[a:b] for a, b in zip(bounds, bounds[1:])]


def _goal_from_towers(towers) -> BwGoal:
    pairs = []
    for tower in towers:
        pairs.append((tower[0], TABLE))
        pairs += [(upper, lower) for lower, upper in zip(tower, tower[1:])]
    return BwGoal(tuple(sorted(pairs, key=lambda p: _block_sort_key(p[0]))))


def _block_sort_key(b: str):
    return (len(b), b)


def generate_instances(count: int, block_range=(10, 30), tower_range=(0, 15), seed: int = 0) -> list[BwInstance]:
    lo_b, hi_b = block_range
    lo_t, hi_t = tower_range
    if count < 0 or lo_b > hi_b or lo_t > hi_t or lo_b < 1:
        raise BwError("empty or invalid generator range")
    if lo_t > hi_b:
        raise BwError(f"tower range {tower_range} exceeds block range {block_range}")
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(lo_b, hi_b + 1))
        tmax = min(hi_t, n)
        blocks = [f"b{i}" for i in range(1, n + 1)]
        init_t = int(rng.integers(1, n + 1))
        goal_t = int(rng.integers(lo_t, max(lo_t, tmax) + 1))
        initial = BwState.from_towers(_random_towers(blocks, init_t, rng))
        goal_towers = _random_towers(blocks, goal_t, rng)
        out.append(BwInstance(f"bw{k:04d}", initial, _goal_from_towers(goal_towers), goal_t, seed))
    return out


def write_corpus(instances, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for inst in instances:
        p = directory / f"{inst.id}.bw"
        p.write_text(format_instance(inst.initial, inst.goal))
        paths.append(p)
    return paths


def read_corpus(directory) -> list[BwProblem]:
    files = sorted(Path(directory).glob("*.bw"))
    if not files:
        raise BwError(f"no .bw instances in {directory}")
    return [load_instance(f) for f in files]


# --- optimality oracles --------------------------------------------------------


def _final_support(goal: BwGoal, block: str):
    return goal.support.get(block)


def misplaced_blocks(state: BwState, goal: BwGoal) -> list[str]:
    memo: dict = {}
    return [b for b in state.blocks if not goal.well_placed(state, b, memo)]


def upper_bound_steps(state: BwState, goal: BwGoal) -> int:
    """Move every misplaced block to the table, then build the goal towers."""
    bad = misplaced_blocks(state, goal)
    unstack = sum(1 for b in bad if state.support(b) is not None)
    stack = sum(1 for b in bad if goal.support.get(b, TABLE) != TABLE)
    return unstack + stack


class _Timeout(Exception):
    pass


def exact_optimum(state: BwState, goal: BwGoal, time_limit: float = EXACT_TIME_LIMIT) -> int:
    """IDA* over move(X, table | Y) with the misplaced-block lower bound."""
    blocks = state.blocks
    idx = {b: i for i, b in enumerate(blocks)}
    n = len(blocks)
    want = tuple(
        -2 if goal.support.get(b) is None else (-1 if goal.support[b] == TABLE else idx[goal.support[b]])
        for b in blocks
    )
    start = tuple(-1 if state.support(b) is None else idx[state.support(b)] for b in blocks)

    def h(s):
        placed = [None] * n

        def ok(i):
            if placed[i] is None:
                w = want[i]
                if w == -2:
                    placed[i] = True
                elif w != s[i]:
                    placed[i] = False
                else:
                    placed[i] = True if w == -1 else ok(w)
            return placed[i]

        return sum(1 for i in range(n) if not ok(i))

    def moves(s):
        covered = set(v for v in s if v >= 0)
        clear = [i for i in range(n) if i not in covered]
        for x in clear:
            if s[x] != -1:
                yield s[:x] + (-1,) + s[x + 1:]
            for y in clear:
                if y != x and s[x] != y:
                    yield s[:x] + (y,) + s[x + 1:]

    deadline = time.monotonic() + time_limit
    bound = h(start)
    best_g: dict = {}

    def search(s, g, bound):
        if time.monotonic() > deadline:
            raise _Timeout
        f = g + h(s)
        if f > bound:
            return f
        if f == g:  # h == 0 means every constrained block is well placed
            return -1
        if best_g.get(s, 1 << 30) <= g:
            return 1 << 30
        best_g[s] = g
        nxt_bound = 1 << 30
        for t in moves(s):
            r = search(t, g + 1, bound)
            if r == -1:
                return -1
            nxt_bound = min(nxt_bound, r)
        return nxt_bound

    while True:
        best_g.clear()
        r = search(start, 0, bound)
        if r == -1:
            return bound
        if r >= 1 << 30:
            raise BwError("goal unreachable")
        bound = r


def optimal_steps(instance) -> tuple[int, str]:
    state, goal = instance.initial, instance.goal
    if goal.reached(state):
        return 0, "exact"
    if len(state.blocks) <= EXACT_MAX_BLOCKS:
        try:
            return exact_optimum(state, goal), "exact"
        except _Timeout:
            pass
    return upper_bound_steps(state, goal), "upper_bound"


def is_unstacking_only(instance) -> bool:
    return all(y == TABLE for _, y in instance.goal.pairs)


# --- benchmark -----------------------------------------------------------------


@dataclass
class BenchRecord:
    instance_id: str
    variant: str
    seed: int
    solved: bool
    steps: int
    bound_value: int
    bound_kind: str

    def row(self) -> list:
        return [self.instance_id, self.variant, self.seed, int(self.solved), self.steps, self.bound_value, self.bound_kind]


def _run_cell(args):
    inst_id, state, goal, variant, seed, bound = args
    sol = solve(state, goal.with_mode(variant), seed=seed)
    return BenchRecord(inst_id, variant, seed, sol.status == "solved", sol.steps, bound[0], bound[1])


def run_benchmark(corpus, variants, seeds, workers: int = 1, bounds: dict | None = None):
    """Solve every (instance, variant, seed) cell; returns ``(records, summary)``."""
    variants = list(variants)
    seeds = list(seeds)
    if not corpus:
        raise BwError("empty corpus")
    bounds = dict(bounds or {})
    for inst in corpus:
        if inst.id not in bounds:
            bounds[inst.id] = optimal_steps(inst)
    cells = [
        (inst.id, inst.initial, inst.goal, v, s, bounds[inst.id])
        for inst in sorted(corpus, key=lambda i: i.id)
        for v in variants
        for s in seeds
    ]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_cell, cells, chunksize=4))
    else:
        records = [_run_cell(c) for c in cells]
    return records, summarize(records)


def _ratio(rec: BenchRecord) -> float:
    if rec.bound_value == 0:
        return 1.0 if rec.steps == 0 else float("inf")
    return rec.steps / rec.bound_value


def summarize(records) -> dict:
    if not records:
        return {"status": "nothing run", "variants": {}}
    out: dict = {"status": "ok", "variants": {}}
    for v in sorted({r.variant for r in records}):
        rs = [r for r in records if r.variant == v]
        exact = [_ratio(r) for r in rs if r.bound_kind == "exact" and r.solved]
        upper = [_ratio(r) for r in rs if r.bound_kind == "upper_bound" and r.solved]
        out["variants"][v] = {
            "runs": len(rs),
            "solve_rate": sum(r.solved for r in rs) / len(rs),
            "mean_ratio_exact": float(np.mean(exact)) if exact else None,
            "mean_ratio_upper_bound": float(np.mean(upper)) if upper else None,
            "max_steps": max(r.steps for r in rs),
        }
    return out


def write_results(fh: IO[str], records) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in sorted(records, key=lambda r: (r.instance_id, r.variant, r.seed)):
        w.writerow(r.row())


def read_results(path) -> list[BenchRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or list(rows[0].keys()) != RESULT_COLUMNS:
        raise BwError(f"{path}: unexpected columns")
    return [
        BenchRecord(r["instance_id"], r["variant"], int(r["seed"]), r["solved"] == "1",
                    int(r["steps"]), int(r["bound_value"]), r["bound_kind"])
        for r in rows
    ]
