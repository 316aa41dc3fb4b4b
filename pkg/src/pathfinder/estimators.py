"""Transferring estimators: probability that one infected source sent a given
number of infected movers along each of its invasion edges.

Mobility model of a source with ``a = I(t-1)`` infected hosts:

* every host independently takes invasion edge h with rate p_h, a hidden edge
  (towards a partially observable or unobservable neighbour) with total rate
  L, an observable edge, or stays with probability p_stay;
* observable edges carried nobody (their neighbour shows no new infected);
* if the source count dropped by ``d``, then ``d`` of its hosts certainly left
  along a non-observable edge. Each of them picks invasion edge h with
  relative rate p_h / (P + L), where P is the total invasion rate.

Unobservable sources have d = 0, observable (I -> S) sources have d = a; the
partially observable estimator sums over how many of the confirmed
travellers reached the destinations.

All functions work in log space through ``lgamma`` so populations up to
10^6 do not overflow.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

from .anatomy import Observability, node_view

NEG_INF = float("-inf")


@dataclass(frozen=True)
class SourceContext:
    prev: int                      # I_i(t-1)
    now: int                       # I_i(t)
    invasion_rates: tuple           # p_h for each invasion edge, in destination order
    hidden_edge_mass: float = 0.0   # sum of rates on partially observable / unobservable edges
    stay: float = 0.0               # residence probability
    observable_mass: float = 0.0    # sum of rates on observable edges

    def __post_init__(self):
        if self.prev < 1:
            raise ValueError("a source must hold infected hosts at t-1")
        if not self.invasion_rates:
            raise ValueError("a source needs at least one invasion edge")
        masses = (*self.invasion_rates, self.hidden_edge_mass, self.stay, self.observable_mass)
        if min(masses) < 0 or math.fsum(masses) > 1 + 1e-9:
            raise ValueError(f"invalid rate masses {masses}")

    @property
    def drop(self) -> int:
        return max(self.prev - self.now, 0)

    @property
    def hidden_mass(self) -> float:
        """Probability a host ends up untraceable: hidden edges plus staying."""
        return self.hidden_edge_mass + self.stay

    @property
    def observability(self) -> Observability:
        return node_view(self.prev, self.now).cls

    @property
    def rho(self) -> int:
        return len(self.invasion_rates)


def _xlogy(x: int, y: float) -> float:
    if x == 0:
        return 0.0
    if y <= 0.0:
        return NEG_INF
    return x * math.log(y)


def log_multinomial(counts: Sequence[int], rest: int, probs: Sequence[float], p_rest: float) -> float:
    """log P(counts, rest) for a multinomial over ``probs`` plus a residual cell."""
    if rest < 0 or any(c < 0 for c in counts):
        return NEG_INF
    n = sum(counts) + rest
    value = math.lgamma(n + 1) - math.lgamma(rest + 1) - sum(math.lgamma(c + 1) for c in counts)
    value += _xlogy(rest, p_rest)
    for c, p in zip(counts, probs):
        value += _xlogy(c, p)
    return value


def logsumexp(values) -> float:
    vals = [v for v in values if v != NEG_INF]
    if not vals:
        return NEG_INF
    top = max(vals)
    return top + math.log(math.fsum(math.exp(v - top) for v in vals))


def _relative(ctx: SourceContext):
    """Destination shares of a confirmed traveller: (per invasion edge, hidden)."""
    denom = math.fsum(ctx.invasion_rates) + ctx.hidden_edge_mass
    if denom <= 0.0:
        return None
    return tuple(p / denom for p in ctx.invasion_rates), ctx.hidden_edge_mass / denom


# ---------------------------------------------------------------- single edge


def log_omega_single(ctx: SourceContext, h: int) -> float:
    """log Omega for a source with exactly one invasion edge carrying ``h`` hosts."""
    if ctx.rho != 1:
        raise ValueError("log_omega_single needs exactly one invasion edge")
    a = ctx.prev
    if h < 0 or h > a:
        raise ValueError(f"allocation {h} outside 0..{a}")
    p = ctx.invasion_rates[0]
    q = ctx.hidden_mass
    cls = ctx.observability

    if cls is Observability.UNOBSERVABLE:
        return math.lgamma(a + 1) - math.lgamma(h + 1) - math.lgamma(a - h + 1) + _xlogy(h, p) + _xlogy(a - h, q)

    d = ctx.drop
    rel = _relative(ctx)
    if rel is None:
        return NEG_INF if d > 0 else log_multinomial([h], a - h, [p], q)
    r, r_hidden = rel[0][0], rel[1]

    if cls is Observability.OBSERVABLE:
        if h > d:
            return NEG_INF
        return math.lgamma(d + 1) - math.lgamma(h + 1) - math.lgamma(d - h + 1) + _xlogy(h, r) + _xlogy(d - h, r_hidden)

    # partially observable: d confirmed travellers plus a - d untracked hosts
    rest = a - d
    terms = []
    if d <= h:
        # phi confirmed travellers went elsewhere, d - phi reached the destination
        for phi in range(0, d + 1):
            extra = h - d + phi
            if extra > rest:
                continue
            terms.append(
                math.lgamma(d + 1) - math.lgamma(phi + 1) - math.lgamma(d - phi + 1)
                + _xlogy(d - phi, r) + _xlogy(phi, r_hidden)
                + math.lgamma(rest + 1) - math.lgamma(extra + 1) - math.lgamma(rest - extra + 1)
                + _xlogy(extra, p) + _xlogy(rest - extra, q)
            )
    else:
        # dh of the h arrivals were confirmed travellers
        for dh in range(0, h + 1):
            extra = h - dh
            if extra > rest:
                continue
            terms.append(
                math.lgamma(d + 1) - math.lgamma(dh + 1) - math.lgamma(d - dh + 1)
                + _xlogy(dh, r) + _xlogy(d - dh, r_hidden)
                + math.lgamma(rest + 1) - math.lgamma(extra + 1) - math.lgamma(rest - extra + 1)
                + _xlogy(extra, p) + _xlogy(rest - extra, q)
            )
    return logsumexp(terms)


def omega_single(ctx: SourceContext, h: int) -> float:
    return math.exp(log_omega_single(ctx, h))


# ---------------------------------------------------------- several edges


def _compositions_below(bounds: Sequence[int], total_cap: int):
    """Integer vectors 0 <= c <= bounds with sum(c) <= total_cap."""
    for c in itertools.product(*(range(b + 1) for b in bounds)):
        if sum(c) <= total_cap:
            yield c


def log_omega_multi(ctx: SourceContext, h: Sequence[int]) -> float:
    """log Omega for a source with one or more invasion edges.

    With a single invasion edge this is :func:`log_omega_single`.
    """
    h = tuple(int(x) for x in h)
    if len(h) != ctx.rho:
        raise ValueError(f"allocation has {len(h)} entries for {ctx.rho} invasion edges")
    if ctx.rho == 1:
        return log_omega_single(ctx, h[0])
    a = ctx.prev
    if min(h) < 0 or sum(h) > a:
        raise ValueError(f"allocation {h} infeasible for {a} infected hosts")
    rates = ctx.invasion_rates
    q = ctx.hidden_mass
    cls = ctx.observability

    if cls is Observability.UNOBSERVABLE:
        return log_multinomial(h, a - sum(h), rates, q)

    d = ctx.drop
    rel = _relative(ctx)
    if rel is None:
        return NEG_INF if d > 0 else log_multinomial(h, a - sum(h), rates, q)
    r, r_hidden = rel

    if cls is Observability.OBSERVABLE:
        if sum(h) > d:
            return NEG_INF
        return log_multinomial(h, d - sum(h), r, r_hidden)

    rest = a - d
    terms = []
    # c[h]: confirmed travellers on invasion edge h; h - c came from the untracked hosts
    for c in _compositions_below(h, d):
        untracked = [x - y for x, y in zip(h, c)]
        if sum(untracked) > rest:
            continue
        p1 = log_multinomial(c, d - sum(c), r, r_hidden)
        p2 = log_multinomial(untracked, rest - sum(untracked), rates, q)
        terms.append(p1 + p2)
    return logsumexp(terms)


def omega_multi(ctx: SourceContext, h: Sequence[int]) -> float:
    return math.exp(log_omega_multi(ctx, h))
