"""Invasion events, invasion partition and observability classes.

An invasion event is the set of nodes whose infected count goes from zero to
positive at one tick. The partition splits it into connected components of
the bipartite graph (infected sources at t-1) x (newly infected nodes),
linked by network edges source -> destination.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DataInconsistencyError
from .network import MetapopNetwork, SurveillanceSeries


class CaseClass(str, Enum):
    I_S = "I->S"
    I_NS = "I->nS"
    MI_S = "mI->S"
    MI_NS = "mI->nS"

    @classmethod
    def of(cls, n_sources: int, n_destinations: int) -> "CaseClass":
        if n_sources < 1 or n_destinations < 1:
            raise ValueError("a case needs at least one source and one destination")
        if n_sources == 1:
            return cls.I_S if n_destinations == 1 else cls.I_NS
        return cls.MI_S if n_destinations == 1 else cls.MI_NS

    @property
    def ambiguous(self) -> bool:
        return self in (CaseClass.MI_S, CaseClass.MI_NS)


class Observability(str, Enum):
    OBSERVABLE = "observable"
    PARTIAL = "partially-observable"
    UNOBSERVABLE = "unobservable"


class EdgeClass(str, Enum):
    INVASION = "invasion"
    OBSERVABLE = "observable"
    PARTIAL = "partially-observable"
    UNOBSERVABLE = "unobservable"


@dataclass(frozen=True)
class InvasionEvent:
    tick: int
    new_nodes: tuple[int, ...]        # S_0
    infected_neighbors: tuple[int, ...]  # I_0
    arrivals: dict                     # j -> H_j = I_j(t)


@dataclass(frozen=True)
class InvasionCase:
    tick: int
    index: int
    sources: tuple[int, ...]
    destinations: tuple[int, ...]
    invasion_edges: tuple[tuple[int, int], ...]
    arrivals: dict  # j -> H_j

    @property
    def case_class(self) -> CaseClass:
        return CaseClass.of(len(self.sources), len(self.destinations))

    @property
    def case_id(self) -> str:
        return f"{self.tick}-{self.index}"

    def edges_from(self, i: int) -> list[tuple[int, int]]:
        return [e for e in self.invasion_edges if e[0] == i]

    def edges_into(self, k: int) -> list[tuple[int, int]]:
        return [e for e in self.invasion_edges if e[1] == k]


@dataclass(frozen=True)
class NodeView:
    cls: Observability
    transition: str  # "S->S", "I->S", "S->I", "I->I"
    prev: int
    now: int

    @property
    def drop(self) -> int:
        return max(self.prev - self.now, 0)


@dataclass
class ObservabilityView:
    tick: int
    nodes: dict = field(default_factory=dict)  # node -> NodeView
    edges: dict = field(default_factory=dict)  # (i, j) -> EdgeClass, for every out-edge of every source

    def drop(self, i: int) -> int:
        return self.nodes[i].drop


def node_view(prev: int, now: int) -> NodeView:
    """Observability of one node from its counts at t-1 and t."""
    if prev == 0:
        return NodeView(Observability.OBSERVABLE, "S->S" if now == 0 else "S->I", prev, now)
    if now == 0:
        return NodeView(Observability.OBSERVABLE, "I->S", prev, now)
    if now < prev:
        return NodeView(Observability.PARTIAL, "I->I", prev, now)
    return NodeView(Observability.UNOBSERVABLE, "I->I", prev, now)


def detect_events(series: SurveillanceSeries, network: MetapopNetwork) -> list[InvasionEvent]:
    """One event per tick at which some node goes from I = 0 to I > 0.

    A node that lost all its infected is susceptible again, so a later
    re-infection opens a new event.
    """
    C = series.counts
    events = []
    for t in range(1, C.shape[0]):
        prev, now = C[t - 1], C[t]
        fresh = np.flatnonzero((prev == 0) & (now > 0)).tolist()
        if not fresh:
            continue
        sources = set()
        for j in fresh:
            srcs = [i for i in network.in_neighbors(j) if prev[i] > 0]
            if not srcs:
                raise DataInconsistencyError(
                    f"t={t}: node {j} became infected without an infected neighbour at t-1"
                )
            sources.update(srcs)
        events.append(
            InvasionEvent(t, tuple(fresh), tuple(sorted(sources)), {j: int(now[j]) for j in fresh})
        )
    return events


def invasion_partition(event: InvasionEvent, network: MetapopNetwork) -> list[InvasionCase]:
    """Split an event into connected cases by alternating neighbour expansion."""
    infected = set(event.infected_neighbors)
    remaining = set(event.new_nodes)
    cases = []
    while remaining:
        start = min(remaining)
        s_set, i_set = {start}, set()
        frontier_s = [start]
        while frontier_s:
            new_i = set()
            for j in frontier_s:
                new_i.update(i for i in network.in_neighbors(j) if i in infected and i not in i_set)
            i_set |= new_i
            new_s = set()
            for i in new_i:
                new_s.update(j for j in network.out_neighbors(i) if j in remaining and j not in s_set)
            s_set |= new_s
            frontier_s = list(new_s)
        remaining -= s_set
        edges = tuple(sorted((i, j) for j in s_set for i in network.in_neighbors(j) if i in i_set))
        cases.append((tuple(sorted(i_set)), tuple(sorted(s_set)), edges))
    cases.sort(key=lambda c: c[1][0])
    return [
        InvasionCase(event.tick, k, srcs, dsts, edges, {j: event.arrivals[j] for j in dsts})
        for k, (srcs, dsts, edges) in enumerate(cases)
    ]


def classify_observability(case: InvasionCase, series: SurveillanceSeries, network: MetapopNetwork) -> ObservabilityView:
    t = case.tick
    prev, now = series.counts[t - 1], series.counts[t]
    view = ObservabilityView(t)
    dests = set(case.destinations)
    for i in case.sources:
        view.nodes[i] = node_view(int(prev[i]), int(now[i]))
        for j in network.out_neighbors(i):
            nv = view.nodes.get(j) or node_view(int(prev[j]), int(now[j]))
            view.nodes[j] = nv
            if j in dests:
                view.edges[(i, j)] = EdgeClass.INVASION
            elif nv.transition in ("S->S", "I->S"):
                view.edges[(i, j)] = EdgeClass.OBSERVABLE
            elif nv.transition == "S->I":
                # only reachable if the partition were not closed
                raise DataInconsistencyError(f"t={t}: newly infected {j} adjacent to source {i} outside its case")
            elif nv.cls is Observability.PARTIAL:
                view.edges[(i, j)] = EdgeClass.PARTIAL
            else:
                view.edges[(i, j)] = EdgeClass.UNOBSERVABLE
    for j in case.destinations:
        view.nodes[j] = node_view(int(prev[j]), int(now[j]))
    return view


def anatomize(series: SurveillanceSeries, network: MetapopNetwork):
    """All cases of all events with their observability views, in tick order."""
    out = []
    for event in detect_events(series, network):
        for case in invasion_partition(event, network):
            out.append((case, classify_observability(case, series, network)))
    return out


def case_record(case: InvasionCase, view: ObservabilityView | None = None) -> dict:
    rec = {
        "case_id": case.case_id,
        "tick": case.tick,
        "class": case.case_class.value,
        "sources": list(case.sources),
        "destinations": list(case.destinations),
        "invasion_edges": [list(e) for e in case.invasion_edges],
        "arrivals": {str(j): h for j, h in sorted(case.arrivals.items())},
    }
    if view is not None:
        rec["observability"] = {
            "nodes": {
                str(j): {"class": nv.cls.value, "transition": nv.transition, "drop": nv.drop}
                for j, nv in sorted(view.nodes.items())
            },
            "edges": [[i, j, c.value] for (i, j), c in sorted(view.edges.items())],
        }
    return rec


def dump_cases(pairs, path) -> None:
    """Write (case, view) pairs as JSON lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for case, view in pairs:
            fh.write(json.dumps(case_record(case, view), sort_keys=True) + "\n")


def load_cases(path) -> list[InvasionCase]:
    cases = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            tick, idx = (int(x) for x in rec["case_id"].split("-"))
            cases.append(
                InvasionCase(
                    tick,
                    idx,
                    tuple(rec["sources"]),
                    tuple(rec["destinations"]),
                    tuple(tuple(e) for e in rec["invasion_edges"]),
                    {int(j): h for j, h in rec["arrivals"].items()},
                )
            )
    return cases
