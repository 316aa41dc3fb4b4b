"""Brute-force references: enumerate where every infected host goes.

Each host of a source is labelled and assigned to one cell (an invasion
edge, a hidden edge, an observable edge or staying). Probabilities are plain
products of per-host cell probabilities, summed over all assignments
consistent with what surveillance shows.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass


@dataclass(frozen=True)
class LabeledSource:
    prev: int
    now: int
    invasion: tuple        # rate per invasion edge
    hidden: tuple = ()     # rate per partially observable / unobservable edge
    observable: tuple = ()  # rate per observable edge
    stay: float = 0.0

    @property
    def drop(self):
        return max(self.prev - self.now, 0)

    @property
    def kind(self):
        if self.now == 0:
            return "observable"
        if self.now < self.prev:
            return "partial"
        return "unobservable"


def _cells(src: LabeledSource):
    cells = [("inv", k, p) for k, p in enumerate(src.invasion)]
    cells += [("hid", k, p) for k, p in enumerate(src.hidden)]
    cells += [("obs", k, p) for k, p in enumerate(src.observable)]
    cells.append(("stay", 0, src.stay))
    return cells


def host_distribution(src: LabeledSource) -> dict:
    """Map from invasion-count vector to probability, by labelled enumeration.

    Hosts 0..d-1 are the confirmed travellers: they left along an invasion
    or hidden edge, each such edge chosen with its rate renormalised over
    those edges. The remaining hosts may go anywhere except an observable
    edge (joint probability, not conditioned).
    """
    cells = _cells(src)
    travel = [c for c in cells if c[0] in ("inv", "hid")]
    travel_mass = math.fsum(c[2] for c in travel)
    d = src.drop if src.kind != "unobservable" else 0
    out: dict = {}
    confirmed_choices = itertools.product(travel, repeat=d)
    free_cells = [c for c in cells if c[0] != "obs"]
    for conf in confirmed_choices:
        if d and travel_mass == 0:
            continue
        w_conf = math.prod(c[2] / travel_mass for c in conf)
        if w_conf == 0:
            continue
        for rest in itertools.product(free_cells, repeat=src.prev - d):
            w = w_conf * math.prod(c[2] for c in rest)
            if w == 0:
                continue
            h = [0] * len(src.invasion)
            for c in conf + rest:
                if c[0] == "inv":
                    h[c[1]] += 1
            key = tuple(h)
            out[key] = out.get(key, 0.0) + w
    return out


def omega(src: LabeledSource, h) -> float:
    return host_distribution(src).get(tuple(h), 0.0)


def case_posterior(sources: dict, edges: tuple, arrivals: dict) -> dict:
    """Posterior over allocations (aligned with ``edges``) of a case.

    ``sources`` maps node -> LabeledSource whose invasion rates follow that
    node's invasion edges sorted by destination.
    """
    per_source = {}
    for i, src in sources.items():
        dests = sorted(k for a, k in edges if a == i)
        per_source[i] = (dests, host_distribution(src))
    names = sorted(per_source)
    joint: dict = {}
    for combo in itertools.product(*(per_source[i][1].items() for i in names)):
        flow = {}
        w = 1.0
        for i, (h, p) in zip(names, combo):
            w *= p
            for k, x in zip(per_source[i][0], h):
                flow[(i, k)] = x
        if w == 0:
            continue
        if any(math.fsum(flow[e] for e in edges if e[1] == k) != arrivals[k] for k in arrivals):
            continue
        key = tuple(flow[e] for e in edges)
        joint[key] = joint.get(key, 0.0) + w
    total = math.fsum(joint.values())
    return {k: v / total for k, v in joint.items()} if total > 0 else {}


def support_posterior(alloc_posterior: dict, edges: tuple) -> dict:
    out: dict = {}
    for counts, p in alloc_posterior.items():
        sup = tuple(e for e, c in zip(edges, counts) if c > 0)
        out[sup] = out.get(sup, 0.0) + p
    return out
