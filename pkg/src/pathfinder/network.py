"""Metapopulation network and surveillance series: data model, validation, I/O.

Network file format (line oriented, ``#`` starts a comment)::

    nodes <n>
    directed <0|1>            # optional, default 1
    node <id> <N_i>           # n lines
    edge <src> <dst> <p_ij> [both]

``both`` adds the reverse edge with the same rate. Ids are either the dense
integers ``0..n-1`` or arbitrary labels; labels are mapped to dense ids in
sorted order and kept for writing back.

Surveillance file: CSV with header ``t,node,I``; every node at ``t=0``, then
one row per (tick, node) whose count is nonzero or changed since the
previous tick.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import NetworkParseError, NetworkValidationError


class MetapopNetwork:
    """Directed weighted graph of subpopulations.

    Treat instances as immutable; arrays are flagged read-only.
    """

    def __init__(self, populations, neighbors, rates, directed=True, labels=None):
        self.populations = np.asarray(populations, dtype=np.int64).copy()
        self.populations.setflags(write=False)
        nb, rt = [], []
        for js, ps in zip(neighbors, rates):
            js = np.asarray(js, dtype=np.int64)
            ps = np.asarray(ps, dtype=np.float64)
            order = np.argsort(js, kind="stable")
            js, ps = js[order].copy(), ps[order].copy()
            js.setflags(write=False)
            ps.setflags(write=False)
            nb.append(js)
            rt.append(ps)
        if len(nb) != len(self.populations):
            raise ValueError("neighbors/rates length does not match populations")
        self.neighbors: tuple[np.ndarray, ...] = tuple(nb)
        self.rates: tuple[np.ndarray, ...] = tuple(rt)
        self.directed = bool(directed)
        self.labels = None if labels is None else tuple(str(x) for x in labels)

    @classmethod
    def from_edges(cls, populations, edges: Iterable[tuple[int, int, float]], directed=True, labels=None):
        n = len(populations)
        nb = [[] for _ in range(n)]
        rt = [[] for _ in range(n)]
        for i, j, p in edges:
            nb[int(i)].append(int(j))
            rt[int(i)].append(float(p))
        return cls(populations, nb, rt, directed=directed, labels=labels)

    @property
    def node_count(self) -> int:
        return len(self.populations)

    def __len__(self):
        return self.node_count

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(js) for js in self.neighbors], dtype=np.int64)

    @property
    def edge_count(self) -> int:
        return int(self.degrees.sum())

    def edges(self):
        for i, (js, ps) in enumerate(zip(self.neighbors, self.rates)):
            for j, p in zip(js.tolist(), ps.tolist()):
                yield i, j, p

    @cached_property
    def _rate_maps(self) -> list[dict[int, float]]:
        return [dict(zip(js.tolist(), ps.tolist())) for js, ps in zip(self.neighbors, self.rates)]

    def rate(self, i: int, j: int) -> float:
        """p_ij, or 0.0 if there is no edge."""
        return self._rate_maps[i].get(j, 0.0)

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._rate_maps[i]

    def out_neighbors(self, i: int) -> list[int]:
        return self.neighbors[i].tolist()

    @cached_property
    def _in_lists(self) -> list[list[int]]:
        inn = [[] for _ in range(self.node_count)]
        for i, js in enumerate(self.neighbors):
            for j in js.tolist():
                inn[j].append(i)
        return inn

    def in_neighbors(self, j: int) -> list[int]:
        return self._in_lists[j]

    def out_flux(self, i: int) -> float:
        return math.fsum(self.rates[i].tolist())

    def stay_probability(self, i: int) -> float:
        """Residence probability 1 - sum_j p_ij."""
        return 1.0 - self.out_flux(i)

    def with_rates(self, rates) -> "MetapopNetwork":
        return MetapopNetwork(self.populations, self.neighbors, rates, self.directed, self.labels)

    def with_populations(self, populations) -> "MetapopNetwork":
        return MetapopNetwork(populations, self.neighbors, self.rates, self.directed, self.labels)

    def __eq__(self, other):
        if not isinstance(other, MetapopNetwork):
            return NotImplemented
        return (
            self.directed == other.directed
            and self.labels == other.labels
            and np.array_equal(self.populations, other.populations)
            and len(self.neighbors) == len(other.neighbors)
            and all(np.array_equal(a, b) for a, b in zip(self.neighbors, other.neighbors))
            and all(
                a.tobytes() == b.tobytes() for a, b in zip(self.rates, other.rates)
            )
        )

    __hash__ = None

    def __repr__(self):
        return f"MetapopNetwork(nodes={self.node_count}, edges={self.edge_count}, directed={self.directed})"


def validate(network: MetapopNetwork) -> list[str]:
    """Return every violated network invariant; an empty list means valid."""
    problems = []
    n = network.node_count
    if n < 1:
        problems.append("network has no nodes")
    for i, pop in enumerate(network.populations.tolist()):
        if pop < 1:
            problems.append(f"node {i}: population {pop} < 1")
    for i, (js, ps) in enumerate(zip(network.neighbors, network.rates)):
        seen = set()
        for j, p in zip(js.tolist(), ps.tolist()):
            if j == i:
                problems.append(f"node {i}: self-loop forbidden")
            if not 0 <= j < n:
                problems.append(f"node {i}: edge to unknown node {j}")
            if j in seen:
                problems.append(f"node {i}: multi-edge forbidden to {j}")
            seen.add(j)
            if not (math.isfinite(p) and 0.0 <= p < 1.0):
                problems.append(f"edge {i}->{j}: rate {p!r} outside [0, 1)")
        total = math.fsum(p for p in ps.tolist() if math.isfinite(p))
        if total >= 1.0:
            problems.append(f"node {i}: no residence mass (sum of rates {total!r} >= 1)")
    if not network.directed:
        for i, js in enumerate(network.neighbors):
            for j in js.tolist():
                if 0 <= j < n and not network.has_edge(j, i):
                    problems.append(f"undirected network missing reverse edge {j}->{i}")
    return problems


def check_network(network: MetapopNetwork) -> MetapopNetwork:
    problems = validate(network)
    if problems:
        raise NetworkValidationError(problems)
    return network


# --------------------------------------------------------------------------
# network file I/O


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_network(text: str) -> MetapopNetwork:
    n = None
    directed = True
    node_rows: list[tuple[str, int, int]] = []
    edge_rows: list[tuple[str, str, float, bool, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "nodes":
                if n is not None:
                    raise NetworkParseError("duplicate 'nodes' header", lineno)
                if len(parts) != 2:
                    raise NetworkParseError("expected 'nodes <n>'", lineno)
                n = int(parts[1])
                if n < 1:
                    raise NetworkParseError("node count must be positive", lineno)
            elif kind == "directed":
                if len(parts) != 2 or parts[1] not in ("0", "1"):
                    raise NetworkParseError("expected 'directed 0|1'", lineno)
                directed = parts[1] == "1"
            elif kind == "node":
                if n is None:
                    raise NetworkParseError("'node' before 'nodes' header", lineno)
                if len(parts) != 3:
                    raise NetworkParseError("expected 'node <id> <N_i>'", lineno)
                node_rows.append((parts[1], int(parts[2]), lineno))
            elif kind == "edge":
                if n is None:
                    raise NetworkParseError("'edge' before 'nodes' header", lineno)
                if len(parts) not in (4, 5) or (len(parts) == 5 and parts[4] != "both"):
                    raise NetworkParseError("expected 'edge <src> <dst> <p> [both]'", lineno)
                edge_rows.append((parts[1], parts[2], float(parts[3]), len(parts) == 5, lineno))
            else:
                raise NetworkParseError(f"unknown record '{kind}'", lineno)
        except ValueError as exc:
            if isinstance(exc, NetworkParseError):
                raise
            raise NetworkParseError(str(exc), lineno) from None
    if n is None:
        raise NetworkParseError("missing 'nodes' header")
    if len(node_rows) != n:
        raise NetworkParseError(f"header declares {n} nodes, found {len(node_rows)}")

    ids = [r[0] for r in node_rows]
    if len(set(ids)) != len(ids):
        dup = next(r for r in node_rows if ids.count(r[0]) > 1)
        raise NetworkParseError(f"duplicate node id {dup[0]}", dup[2])
    dense = all(x.isdigit() for x in ids) and sorted(int(x) for x in ids) == list(range(n))
    if dense:
        index = {x: int(x) for x in ids}
        labels = None
    else:
        ordered = sorted(ids)
        index = {x: k for k, x in enumerate(ordered)}
        labels = ordered
    pops = [0] * n
    for label, pop, _ in node_rows:
        pops[index[label]] = pop

    edges = []
    for src, dst, p, both, lineno in edge_rows:
        if src not in index or dst not in index:
            raise NetworkParseError(f"edge references unknown node", lineno)
        edges.append((index[src], index[dst], p))
        if both:
            edges.append((index[dst], index[src], p))
    return MetapopNetwork.from_edges(pops, edges, directed=directed, labels=labels)


def format_network(network: MetapopNetwork) -> str:
    lab = network.labels or [str(i) for i in range(network.node_count)]
    out = [f"nodes {network.node_count}", f"directed {int(network.directed)}"]
    for i, pop in enumerate(network.populations.tolist()):
        out.append(f"node {lab[i]} {pop}")
    for i, j, p in network.edges():
        out.append(f"edge {lab[i]} {lab[j]} {p!r}")
    return "\n".join(out) + "\n"


def load_network(path) -> MetapopNetwork:
    """Read and validate a network file."""
    with open(path, encoding="utf-8") as fh:
        net = parse_network(fh.read())
    return check_network(net)


def save_network(network: MetapopNetwork, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_network(network))


# --------------------------------------------------------------------------
# surveillance series


@dataclass
class SurveillanceSeries:
    """Infected counts per tick; ``counts[t, i]`` is I_i(t), row 0 the initial state."""

    counts: np.ndarray
    populations: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2:
            raise ValueError("counts must be a (ticks + 1, nodes) matrix")
        if self.populations is not None:
            self.populations = np.asarray(self.populations, dtype=np.int64)

    @property
    def ticks(self) -> int:
        """Index of the last recorded tick."""
        return self.counts.shape[0] - 1

    @property
    def node_count(self) -> int:
        return self.counts.shape[1]

    def drop(self, t: int) -> np.ndarray:
        """Per-node I(t-1) - I(t)."""
        return self.counts[t - 1] - self.counts[t]

    def __eq__(self, other):
        if not isinstance(other, SurveillanceSeries):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)


def validate_series(series: SurveillanceSeries, network: MetapopNetwork | None = None) -> list[str]:
    problems = []
    if series.counts.shape[0] < 1:
        problems.append("series has no rows")
    if (series.counts < 0).any():
        t, i = np.argwhere(series.counts < 0)[0]
        problems.append(f"negative count at t={t}, node={i}")
    if network is not None and series.node_count != network.node_count:
        problems.append(f"series has {series.node_count} nodes, network has {network.node_count}")
    if series.populations is not None:
        if series.populations.shape != series.counts.shape:
            problems.append("population snapshot shape mismatch")
        elif (series.counts > series.populations).any():
            t, i = np.argwhere(series.counts > series.populations)[0]
            problems.append(f"count exceeds population at t={t}, node={i}")
    return problems


def save_series(series: SurveillanceSeries, path) -> None:
    counts = series.counts
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "node", "I"])
        for i, v in enumerate(counts[0].tolist()):
            w.writerow([0, i, v])
        for t in range(1, counts.shape[0]):
            row, prev = counts[t], counts[t - 1]
            listed = np.flatnonzero((row != 0) | (row != prev)).tolist()
            # an all-zero unchanged tick still gets one row so the tick count survives
            for i in listed or [0]:
                w.writerow([t, i, int(row[i])])


def load_series(path, node_count: int | None = None) -> SurveillanceSeries:
    rows: list[tuple[int, int, int]] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "node", "I"]:
            raise NetworkParseError(f"expected header t,node,I, got {header}", 1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                t, i, v = (int(x) for x in rec)
            except ValueError:
                raise NetworkParseError(f"bad surveillance row {rec}", lineno) from None
            rows.append((t, i, v))
    initial = {i: v for t, i, v in rows if t == 0}
    n = node_count if node_count is not None else len(initial)
    if sorted(initial) != list(range(n)):
        raise NetworkParseError("t=0 rows must list every node exactly once")
    T = max((t for t, _, _ in rows), default=0)
    counts = np.zeros((T + 1, n), dtype=np.int64)
    for i, v in initial.items():
        counts[0, i] = v
    by_tick: dict[int, list[tuple[int, int]]] = {}
    for t, i, v in rows:
        if t > 0:
            by_tick.setdefault(t, []).append((i, v))
    if any(not 0 <= i < n or t < 0 for t, i, _ in rows):
        raise NetworkParseError("surveillance row outside the node or tick range")
    for t in range(1, T + 1):
        # unlisted nodes were zero and unchanged
        for i, v in by_tick.get(t, ()):
            counts[t, i] = v
    return SurveillanceSeries(counts)
