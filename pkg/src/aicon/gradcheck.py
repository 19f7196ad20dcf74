"""Central finite-difference checks for connection and component Jacobians."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .graph import Graph


@dataclass
class CheckResult:
    item: str
    worst: float  # largest relative error over all sampled points
    points: int

    def passed(self, rtol: float = 1e-5) -> bool:
        return self.worst < rtol


def numeric_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float = 1e-6,
                     richardson: bool = False) -> np.ndarray:
    """Central differences; ``richardson`` combines steps h and h/2 for O(h^4) truncation."""
    x = np.asarray(x, dtype=float)

    def central(h):
        cols = []
        for k in range(x.shape[0]):
            d = np.zeros_like(x)
            d[k] = h
            cols.append((np.atleast_1d(fn(x + d)) - np.atleast_1d(fn(x - d))) / (2 * h))
        return np.array(cols).T.reshape(-1, x.shape[0])

    if not richardson:
        return central(step)
    return (4 * central(step / 2) - central(step)) / 3


def relative_error(analytic, numeric, floor: float = 1e-8) -> float:
    analytic = np.atleast_2d(np.asarray(analytic, dtype=float))
    numeric = np.atleast_2d(np.asarray(numeric, dtype=float))
    if analytic.shape != numeric.shape:
        return float("inf")
    return float(np.abs(analytic - numeric).max(initial=0.0) / max(np.abs(numeric).max(initial=0.0), floor))


def _replace(values, i, x):
    out = list(values)
    out[i] = x
    return out


def check_graph(
    graph: Graph,
    sample: Callable[[np.random.Generator], dict],
    points: int = 100,
    seed: int = 0,
    step: float = 1e-6,
    floor: float = 1e-8,
    richardson: bool = True,
) -> list[CheckResult]:
    """Compare every analytic Jacobian in ``graph`` against central differences.

    ``sample(rng)`` returns node values (and optionally ``("cov", id)`` keys
    for covariances) describing one random operating point; unspecified
    nodes keep their current values.
    """
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    saved = ({k: v.copy() for k, v in graph.values.items()},
             {k: None if v is None else v.copy() for k, v in graph.covariances.items()})
    try:
        for _ in range(points):
            for key, val in sample(rng).items():
                if isinstance(key, tuple):
                    graph.covariances[key[1]] = np.asarray(val, dtype=float)
                else:
                    graph.values[key] = np.atleast_1d(np.asarray(val, dtype=float))
            for cid, conn in graph.connections.items():
                vals = [graph.values[n].copy() for n in conn.inputs]
                extra = ([graph.covariances[n] for n in conn.inputs],) if conn.needs_covariance else ()
                for i in range(len(vals)):
                    analytic = conn.jacobian(i, vals, *extra)
                    numeric = numeric_jacobian(lambda x: conn.evaluate(_replace(vals, i, x), *extra), vals[i], step,
                                               richardson)
                    name = f"{cid}[{conn.inputs[i]}]"
                    worst[name] = max(worst.get(name, 0.0), relative_error(analytic, numeric, floor))
            for sid, comp in graph.components.items():
                prev = graph.values[sid].copy()
                cov = graph.covariances[sid]
                contribs = [np.atleast_1d(graph._evaluate(c)) for c in comp.connections]
                d_prev, d_contribs = comp.jacobians(prev, contribs, cov)
                numeric = numeric_jacobian(lambda x: comp.update(x, contribs, cov)[0], prev, step, richardson)
                name = f"component {sid}[prev]"
                worst[name] = max(worst.get(name, 0.0), relative_error(d_prev, numeric, floor))
                for j, cid in enumerate(comp.connections):
                    numeric = numeric_jacobian(
                        lambda x: comp.update(prev, _replace(contribs, j, x), cov)[0], contribs[j], step, richardson
                    )
                    name = f"component {sid}[{cid}]"
                    worst[name] = max(worst.get(name, 0.0), relative_error(d_contribs[j], numeric, floor))
    finally:
        graph.values, graph.covariances = saved
    return [CheckResult(k, v, points) for k, v in sorted(worst.items())]


def bw_sampler(graph: Graph):
    """Uniform likelihoods in [0, 1] for every Blocks World quantity."""
    ids = list(graph.nodes)

    def sample(rng):
        return {k: rng.uniform(0.0, 1.0, size=graph.nodes[k].dim) for k in ids}

    return sample
