"""Comparison trees: arrival-time (ARR), effective-distance (EFF) and
Monte-Carlo maximum-likelihood (MCML) shortest-path arborescences."""

from __future__ import annotations

import heapq
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import rng as _rng
from .errors import ConfigError
from .network import MetapopNetwork
from .pathway import PathwayEdge, PathwayTree
from .simulate import SimConfig, run

log = logging.getLogger(__name__)

MIN_WEIGHT = 1e-6
PATH_TOL = 1e-9


def shortest_path_tree(network: MetapopNetwork, root: int, weights) -> tuple[dict, np.ndarray]:
    """Dijkstra from ``root``; ``weights[i]`` aligns with ``network.neighbors[i]``.

    Infinite weights mark unusable edges. Each reached node takes as parent
    the smallest-id in-neighbour lying on some shortest path, so ties are
    broken by node id independently of heap order.
    """
    n = network.node_count
    if not 0 <= root < n:
        raise ConfigError(f"root {root} out of range")
    dist = np.full(n, math.inf)
    dist[root] = 0.0
    done = np.zeros(n, dtype=bool)
    heap = [(0.0, root)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in zip(network.neighbors[u].tolist(), weights[u]):
            if math.isinf(w):
                continue
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    parent = {}
    for v in range(n):
        if v == root or math.isinf(dist[v]):
            continue
        tol = PATH_TOL * max(1.0, dist[v])
        for u in network.in_neighbors(v):
            u = int(u)
            if math.isinf(dist[u]):
                continue
            w = weights[u][int(np.searchsorted(network.neighbors[u], v))]
            if abs(dist[u] + w - dist[v]) <= tol:
                parent[v] = u
                break
    return parent, dist


def _tree(parent: dict, root: int, method: str, params: dict) -> PathwayTree:
    return PathwayTree(root, [PathwayEdge(parent[v], v) for v in sorted(parent)], method, params)


def _log_weights(network: MetapopNetwork, fn) -> list:
    out = []
    for i, ps in enumerate(network.rates):
        row = []
        for p in ps.tolist():
            row.append(math.inf if p <= 0 else max(fn(i, p), MIN_WEIGHT))
        out.append(row)
    return out


def mean_out_flux(network: MetapopNetwork) -> float:
    fl = [network.out_flux(i) for i in range(network.node_count) if len(network.neighbors[i])]
    return math.fsum(fl) / len(fl)


def arr_tree(network: MetapopNetwork, seed: int, alpha: float | None = None) -> PathwayTree:
    """Arrival-time surrogate: edge length alpha - ln p_ij.

    By default alpha = 1 + ln(mean out-flux), which makes the lengths equal to
    the effective lengths whenever every node has the same out-flux.
    """
    if alpha is None:
        alpha = 1.0 + math.log(mean_out_flux(network))
    weights = _log_weights(network, lambda i, p: alpha - math.log(p))
    parent, _ = shortest_path_tree(network, seed, weights)
    return _tree(parent, seed, "arr", {"alpha": repr(float(alpha))})


def eff_tree(network: MetapopNetwork, seed: int) -> PathwayTree:
    """Effective distance: edge length 1 - ln(p_ij / sum_l p_il)."""
    flux = [network.out_flux(i) for i in range(network.node_count)]
    weights = _log_weights(network, lambda i, p: 1.0 - math.log(p / flux[i]))
    parent, _ = shortest_path_tree(network, seed, weights)
    return _tree(parent, seed, "eff", {})


def _first_arrival_credit(args):
    network, config = args
    _, truth = run(network, config)
    credit = {}
    for node, epochs in truth.arrivals.items():
        first = epochs[0]
        total = sum(first.sources.values())
        for src, cnt in first.sources.items():
            credit[(src, node)] = cnt / total
    return credit


def arrival_frequencies(network: MetapopNetwork, sim_config: SimConfig, runs: int, jobs: int = 1) -> dict:
    """f_ij: share of runs in which j was first reached from i (fractional credit)."""
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    tasks = [
        (network, replace(sim_config, rng_seed=_rng.derive_seed(sim_config.rng_seed, "mcml", r)))
        for r in range(runs)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            credits = list(pool.map(_first_arrival_credit, tasks))
    else:
        credits = [_first_arrival_credit(t) for t in tasks]
    f: dict = {}
    for c in credits:
        for key, v in c.items():
            f[key] = f.get(key, 0.0) + v
    return {k: v / runs for k, v in sorted(f.items())}


def mcml_tree(network: MetapopNetwork, seed: int, sim_config: SimConfig, runs: int = 50,
              jobs: int = 1, frequencies: dict | None = None) -> PathwayTree:
    """Shortest-path tree under -ln(f_ij + eps) with eps = 1 / (10 runs)."""
    if frequencies is None:
        frequencies = arrival_frequencies(network, replace(sim_config, seed_node=seed), runs, jobs)
    eps = 1.0 / (10 * runs)
    weights = []
    for i, js in enumerate(network.neighbors):
        weights.append([max(-math.log(frequencies.get((i, j), 0.0) + eps), MIN_WEIGHT) for j in js.tolist()])
    parent, dist = shortest_path_tree(network, seed, weights)
    missing = int(np.isinf(dist).sum())
    if missing:
        log.warning("mcml tree: %d nodes unreachable from %d", missing, seed)
    return _tree(parent, seed, "mcml", {"runs": runs, "eps": repr(eps)})
