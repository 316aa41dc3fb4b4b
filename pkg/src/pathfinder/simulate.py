"""Stochastic SI reaction-diffusion Monte Carlo on a metapopulation network.

One tick = reaction (binomial infections inside every node) followed by
diffusion (multinomial departures of S and I from a synchronous snapshot).
Surveillance records I_i(t) after both substeps.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from . import rng as _rng
from .errors import ConfigError
from .network import MetapopNetwork, SurveillanceSeries

log = logging.getLogger(__name__)

STOP_RULES = ("all-infected", "tick-limit")


@dataclass(frozen=True)
class SimConfig:
    beta: float = 0.3
    seed_node: int = 0
    seed_infected: int = 5
    max_ticks: int = 365
    rng_seed: int = 0
    stop_rule: str = "all-infected"

    def check(self, network: MetapopNetwork | None = None) -> "SimConfig":
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.max_ticks < 0:
            raise ConfigError("max_ticks must be >= 0")
        if self.seed_infected < 0:
            raise ConfigError("seed_infected must be >= 0")
        if self.stop_rule not in STOP_RULES:
            raise ConfigError(f"stop_rule must be one of {STOP_RULES}")
        if network is not None:
            if not 0 <= self.seed_node < network.node_count:
                raise ConfigError(f"seed node {self.seed_node} out of range 0..{network.node_count - 1}")
            if self.seed_infected > network.populations[self.seed_node]:
                raise ConfigError("seed_infected exceeds the seed node population")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimState:
    S: np.ndarray
    I: np.ndarray
    clamped: int = 0  # reaction probabilities clipped to 1

    @property
    def N(self) -> np.ndarray:
        return self.S + self.I

    def copy(self) -> "SimState":
        return SimState(self.S.copy(), self.I.copy(), self.clamped)


@dataclass(frozen=True)
class Arrival:
    """One invasion of ``node``: infected arriving while it held none."""

    tick: int
    node: int
    sources: dict  # src -> infected movers


@dataclass
class GroundTruthLog:
    """Infected moves into empty nodes and the arrival epochs they open.

    ``moves`` holds (tick, src, dst, count) for every infected move whose
    destination had I = 0 before the tick; these are exactly the moves that
    can constitute an invasion.
    """

    seed_node: int
    seed_infected: int = 0
    moves: list = field(default_factory=list)
    arrivals: dict = field(default_factory=dict)  # node -> [Arrival, ...] in tick order

    def first_arrival(self, node: int) -> Arrival | None:
        epochs = self.arrivals.get(node)
        return epochs[0] if epochs else None

    def all_arrivals(self) -> list[Arrival]:
        out = [a for epochs in self.arrivals.values() for a in epochs]
        out.sort(key=lambda a: (a.tick, a.node))
        return out

    def pathway_edges(self) -> set[tuple[int, int, int]]:
        """The true invasion pathway as (tick, src, dst) triples."""
        return {(a.tick, s, a.node) for a in self.all_arrivals() for s in a.sources}


def initial_state(network: MetapopNetwork, config: SimConfig) -> SimState:
    I = np.zeros(network.node_count, dtype=np.int64)
    I[config.seed_node] = config.seed_infected
    S = network.populations.astype(np.int64) - I
    return SimState(S, I)


def react(state: SimState, network: MetapopNetwork, beta: float, seed: int, tick: int) -> SimState:
    """New infections ~ Binomial(S_i, beta I_i / N_i) in every node."""
    new = state.copy()
    if beta == 0:
        return new
    N = state.N
    for i in np.flatnonzero(state.I > 0).tolist():
        if state.S[i] == 0:
            continue
        lam = beta * state.I[i] / N[i]
        if lam > 1.0:
            lam = 1.0
            new.clamped += 1
        k = int(_rng.stream(seed, _rng.REACT, tick, i).binomial(int(state.S[i]), lam))
        new.S[i] -= k
        new.I[i] += k
    return new


class _Mobility:
    """Per-node multinomial probability vectors (edge rates then stay)."""

    def __init__(self, network: MetapopNetwork):
        self.neighbors = network.neighbors
        self.pvals = []
        for i, ps in enumerate(network.rates):
            stay = network.stay_probability(i)
            self.pvals.append(np.append(ps, max(stay, 0.0)))
        self.mobile = [len(ps) > 0 and float(ps.sum()) > 0 for ps in network.rates]


_MOBILITY_CACHE: dict[int, _Mobility] = {}


def _mobility(network: MetapopNetwork) -> _Mobility:
    key = id(network)
    mob = _MOBILITY_CACHE.get(key)
    if mob is None or mob.neighbors is not network.neighbors:
        mob = _Mobility(network)
        _MOBILITY_CACHE.clear()
        _MOBILITY_CACHE[key] = mob
    return mob


def diffuse(state: SimState, network: MetapopNetwork, seed: int, tick: int):
    """Synchronous multinomial mobility of S and I.

    Returns the new state and the infected moves as an (k, 3) integer array
    of (src, dst, count) rows.
    """
    mob = _mobility(network)
    dS = np.zeros_like(state.S)
    dI = np.zeros_like(state.I)
    moves = []
    for i in range(network.node_count):
        if not mob.mobile[i]:
            continue
        js = mob.neighbors[i]
        for X, dX, tag in ((state.S, dS, _rng.DIFFUSE_S), (state.I, dI, _rng.DIFFUSE_I)):
            x = int(X[i])
            if x == 0:
                continue
            out = _rng.stream(seed, tag, tick, i).multinomial(x, mob.pvals[i])[:-1]
            if not out.any():
                continue
            total = int(out.sum())
            dX[i] -= total
            np.add.at(dX, js, out)
            if tag == _rng.DIFFUSE_I:
                nz = np.flatnonzero(out)
                moves.append(np.column_stack([np.full(len(nz), i), js[nz], out[nz]]))
    new = SimState(state.S + dS, state.I + dI, state.clamped)
    mv = np.concatenate(moves) if moves else np.zeros((0, 3), dtype=np.int64)
    return new, mv.astype(np.int64)


def run(network: MetapopNetwork, config: SimConfig):
    """Simulate until every node is infected or ``max_ticks`` is reached.

    Returns ``(SurveillanceSeries, GroundTruthLog)``. Deterministic in
    ``config.rng_seed``.
    """
    config.check(network)
    state = initial_state(network, config)
    rows = [state.I.copy()]
    pops = [state.N.copy()]
    truth = GroundTruthLog(seed_node=config.seed_node, seed_infected=config.seed_infected)
    if config.seed_infected > 0:
        truth.arrivals[config.seed_node] = [Arrival(0, config.seed_node, {})]
    total = int(state.N.sum())
    for t in range(1, config.max_ticks + 1):
        prev_I = state.I
        state = react(state, network, config.beta, config.rng_seed, t)
        state, moves = diffuse(state, network, config.rng_seed, t)
        rows.append(state.I.copy())
        pops.append(state.N.copy())
        if len(moves):
            into_empty = moves[prev_I[moves[:, 1]] == 0]
            by_dst: dict[int, dict[int, int]] = {}
            for src, dst, cnt in into_empty.tolist():
                truth.moves.append((t, src, dst, cnt))
                by_dst.setdefault(dst, {})[src] = cnt
            for dst in sorted(by_dst):
                truth.arrivals.setdefault(dst, []).append(Arrival(t, dst, dict(sorted(by_dst[dst].items()))))
        if config.stop_rule == "all-infected" and (state.I > 0).all():
            break
    assert int(state.N.sum()) == total, "population not conserved"
    if state.clamped:
        log.warning("reaction probability clamped to 1 in %d node-ticks", state.clamped)
    series = SurveillanceSeries(np.array(rows), np.array(pops))
    return series, truth


def check_truth_completeness(series: SurveillanceSeries, truth: GroundTruthLog) -> list[str]:
    """Every 0 -> positive transition must be fully explained by logged arrivals."""
    problems = []
    logged: dict[tuple[int, int], int] = {}
    for t, _, dst, cnt in truth.moves:
        logged[(t, dst)] = logged.get((t, dst), 0) + cnt
    C = series.counts
    for t in range(1, C.shape[0]):
        for j in np.flatnonzero(C[t - 1] == 0).tolist():
            if logged.get((t, j), 0) != C[t, j]:
                problems.append(f"t={t} node={j}: I={C[t, j]} but logged arrivals {logged.get((t, j), 0)}")
    return problems


def save_truth(truth: GroundTruthLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "src", "dst", "count"])
        w.writerow([0, -1, truth.seed_node, truth.seed_infected])
        for row in truth.moves:
            w.writerow(row)


def load_truth(path) -> GroundTruthLog:
    """Inverse of :func:`save_truth` (arrivals are rebuilt from the moves)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "src", "dst", "count"]:
            raise ValueError(f"expected header t,src,dst,count, got {header}")
        rows = [tuple(int(x) for x in rec) for rec in reader if rec]
    seed_rows = [r for r in rows if r[1] == -1]
    seed, seed_count = (seed_rows[0][2], seed_rows[0][3]) if seed_rows else (0, 0)
    truth = GroundTruthLog(seed_node=seed, seed_infected=seed_count)
    if seed_count > 0:
        truth.arrivals[seed] = [Arrival(0, seed, {})]
    grouped: dict[tuple[int, int], dict[int, int]] = {}
    for t, src, dst, cnt in rows:
        if src == -1:
            continue
        truth.moves.append((t, src, dst, cnt))
        grouped.setdefault((t, dst), {})[src] = cnt
    for (t, dst) in sorted(grouped):
        truth.arrivals.setdefault(dst, []).append(Arrival(t, dst, dict(sorted(grouped[(t, dst)].items()))))
    return truth
