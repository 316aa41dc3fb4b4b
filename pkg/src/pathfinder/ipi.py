"""Invasion pathway identification per case and whole-pathway assembly.

Per ambiguous case (several sources): try the two uniqueness theorems, else
enumerate every integer allocation of arrivals to invasion edges, weight each
by the product of its sources' transferring estimators, normalise, merge
allocations that activate the same edge set and keep the heaviest group.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .anatomy import (
    CaseClass,
    EdgeClass,
    InvasionCase,
    Observability,
    ObservabilityView,
    anatomize,
)
from .errors import DataInconsistencyError, DegenerateCaseError
from .estimators import NEG_INF, SourceContext, log_omega_multi, logsumexp
from .network import MetapopNetwork, SurveillanceSeries
from .pathway import PathwayEdge, PathwayTree

log = logging.getLogger(__name__)

TIE_TOL = 1e-12
BOUND_TOL = 1e-12
DEFAULT_MAX_SOLUTIONS = 2_000_000
DEFAULT_EXACT_LIMIT = 20_000


@dataclass
class CandidateSolution:
    edges: tuple            # invasion edges (i, k), shared by all solutions of a case
    counts: tuple           # H_ik aligned with ``edges``
    log_weight: float = NEG_INF
    posterior: float = 0.0

    @property
    def support(self) -> tuple:
        return tuple(e for e, c in zip(self.edges, self.counts) if c > 0)

    def allocation(self) -> dict:
        return dict(zip(self.edges, self.counts))


@dataclass(frozen=True)
class IdentifiabilityReport:
    entropy: float              # normalised, base 2
    identifiability: float      # pi * (1 - entropy)
    pi: float
    pi_single: float            # largest single-allocation posterior
    solution_count: int
    group_count: int
    pi_lower: float
    pi_upper: float
    pi_upper_literal: float     # pi - H(pi * p) / log M, kept as a diagnostic
    p_lower: float
    p_upper: float

    @property
    def bound_violation(self) -> bool:
        return (
            self.pi_lower > self.identifiability + BOUND_TOL
            or self.identifiability > self.pi_upper + BOUND_TOL
            or self.p_lower > self.pi + BOUND_TOL
            or self.pi > self.p_upper + BOUND_TOL
        )

    @property
    def literal_upper_violation(self) -> bool:
        return self.identifiability > self.pi_upper_literal + BOUND_TOL

    def to_dict(self) -> dict:
        return {
            "entropy": self.entropy,
            "identifiability": self.identifiability,
            "pi": self.pi,
            "pi_single": self.pi_single,
            "M": self.solution_count,
            "groups": self.group_count,
            "identifiability_bounds": [self.pi_lower, self.pi_upper],
            "identifiability_upper_literal": self.pi_upper_literal,
            "pi_bounds": [self.p_lower, self.p_upper],
            "bound_violation": self.bound_violation,
        }


CERTAIN = IdentifiabilityReport(0.0, 1.0, 1.0, 1.0, 1, 1, 1.0, 1.0, 1.0, 1.0, 1.0)


@dataclass
class IdentifiedPathway:
    case: InvasionCase
    support: tuple
    pi: float
    solution_count: int
    unique: bool = False        # settled by a uniqueness theorem
    tie: bool = False
    method: str = "enumeration"  # forced | theorem1 | theorem2 | enumeration | factorized
    report: IdentifiabilityReport = CERTAIN
    theorem_inconsistent: bool = False
    groups: list = field(default_factory=list)  # (support, merged posterior), heaviest first
    posterior_error: float = 0.0  # |sum of posteriors - 1|, worst over sub-cases when factorised

    @property
    def case_class(self) -> CaseClass:
        return self.case.case_class


# ------------------------------------------------------------ theorem paths


def _others_observable(view: ObservabilityView, i: int) -> bool:
    """Every out-edge of ``i`` that is not an invasion edge leads to an S->S or I->S node."""
    return all(c in (EdgeClass.INVASION, EdgeClass.OBSERVABLE) for (a, _), c in view.edges.items() if a == i)


def theorem1_unique(case: InvasionCase, view: ObservabilityView):
    """Allocation forced by the drops of partially observable sources, or None."""
    if case.case_class is not CaseClass.MI_S:
        raise ValueError("theorem1_unique applies to mI->S cases")
    (k,) = case.destinations
    partial = [i for i in case.sources if view.nodes[i].cls is Observability.PARTIAL]
    if not partial:
        return None
    if not all(_others_observable(view, i) for i in partial):
        return None
    if sum(view.nodes[i].drop for i in partial) != case.arrivals[k]:
        return None
    keep = set(partial)
    return {(i, k): (view.nodes[i].drop if i in keep else 0) for i in case.sources}


def _solve_exact(rows: list[list[Fraction]], rhs: list[Fraction], nvars: int):
    """Gauss-Jordan over rationals. Returns (rank, solution or None, consistent)."""
    A = [r[:] + [b] for r, b in zip(rows, rhs)]
    pivots = []
    r = 0
    for c in range(nvars):
        piv = next((q for q in range(r, len(A)) if A[q][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        lead = A[r][c]
        A[r] = [x / lead for x in A[r]]
        for q in range(len(A)):
            if q != r and A[q][c] != 0:
                f = A[q][c]
                A[q] = [x - f * y for x, y in zip(A[q], A[r])]
        pivots.append(c)
        r += 1
        if r == len(A):
            break
    consistent = all(row[-1] == 0 for row in A[r:])
    if not consistent or r < nvars:
        return r, None, consistent
    sol = [Fraction(0)] * nvars
    for q, c in enumerate(pivots):
        sol[c] = A[q][-1]
    return r, sol, True


def theorem2_unique(case: InvasionCase, view: ObservabilityView):
    """Allocation fixed by row sums = drops and column sums = arrivals, or None.

    Raises DataInconsistencyError when the side conditions hold but the
    linear system has no solution.
    """
    if case.case_class is not CaseClass.MI_NS:
        raise ValueError("theorem2_unique applies to mI->nS cases")
    edges = case.invasion_edges
    n, m = len(case.destinations), len(case.sources)
    if len(edges) > n + m:
        return None
    if not all(_others_observable(view, i) for i in case.sources):
        return None
    drops = {i: view.nodes[i].drop for i in case.sources}
    if sum(drops.values()) != sum(case.arrivals.values()):
        return None
    rows, rhs = [], []
    for k in case.destinations:
        rows.append([Fraction(int(e[1] == k)) for e in edges])
        rhs.append(Fraction(case.arrivals[k]))
    for i in case.sources:
        rows.append([Fraction(int(e[0] == i)) for e in edges])
        rhs.append(Fraction(drops[i]))
    rank, sol, consistent = _solve_exact(rows, rhs, len(edges))
    if not consistent:
        raise DataInconsistencyError(
            f"case {case.case_id}: drops {drops} cannot be routed onto arrivals {case.arrivals}"
        )
    if sol is None or any(x.denominator != 1 or x < 0 for x in sol):
        return None
    return {e: int(x) for e, x in zip(edges, sol)}


# ------------------------------------------------------------ enumeration


def _capacities(case: InvasionCase, source) -> dict:
    if isinstance(source, SurveillanceSeries):
        prev = source.counts[case.tick - 1]
        return {i: int(prev[i]) for i in case.sources}
    if isinstance(source, ObservabilityView):
        return {i: source.nodes[i].prev for i in case.sources}
    return {i: int(source[i]) for i in case.sources}


def _split(total: int, caps: list[int]):
    """All vectors x with 0 <= x <= caps and sum(x) == total."""
    if not caps:
        if total == 0:
            yield ()
        return
    rest_cap = sum(caps[1:])
    for x in range(max(0, total - rest_cap), min(caps[0], total) + 1):
        for tail in _split(total - x, caps[1:]):
            yield (x, *tail)


def enumerate_solutions(case: InvasionCase, capacities, max_solutions: int = DEFAULT_MAX_SOLUTIONS) -> list[CandidateSolution]:
    """Every non-negative integer allocation meeting the arrival counts.

    ``capacities`` is the surveillance series, the case's observability view
    or a mapping source -> I(t-1).
    """
    cap = _capacities(case, capacities)
    edges = case.invasion_edges
    index = {e: n for n, e in enumerate(edges)}
    per_dest = [(k, [e for e in edges if e[1] == k]) for k in case.destinations]
    out: list[CandidateSolution] = []
    counts = [0] * len(edges)

    def rec(d: int, left: dict):
        if d == len(per_dest):
            out.append(CandidateSolution(edges, tuple(counts)))
            if len(out) > max_solutions:
                raise DegenerateCaseError(f"case {case.case_id}: more than {max_solutions} allocations")
            return
        k, into = per_dest[d]
        caps = [left[e[0]] for e in into]
        for xs in _split(case.arrivals[k], caps):
            for e, x in zip(into, xs):
                counts[index[e]] = x
                left[e[0]] -= x
            rec(d + 1, left)
            for e, x in zip(into, xs):
                counts[index[e]] = 0
                left[e[0]] += x

    rec(0, dict(cap))
    if not out:
        raise DataInconsistencyError(
            f"case {case.case_id}: arrivals {case.arrivals} exceed the infected hosts of sources {cap}"
        )
    return out


# ------------------------------------------------------------ scoring


def source_contexts(case: InvasionCase, view: ObservabilityView, network: MetapopNetwork) -> dict:
    out = {}
    for i in case.sources:
        nv = view.nodes[i]
        inv = sorted(case.edges_from(i), key=lambda e: e[1])
        hidden, observable = [], []
        for (a, j), c in view.edges.items():
            if a != i or c is EdgeClass.INVASION:
                continue
            (observable if c is EdgeClass.OBSERVABLE else hidden).append(network.rate(i, j))
        out[i] = SourceContext(
            nv.prev,
            nv.now,
            tuple(network.rate(i, k) for _, k in inv),
            math.fsum(hidden),
            max(network.stay_probability(i), 0.0),
            math.fsum(observable),
        )
    return out


def score_solutions(case: InvasionCase, contexts: Mapping[int, SourceContext], solutions: list[CandidateSolution]):
    """Fill log weights and posteriors in place; returns ``solutions``."""
    if not solutions:
        raise ValueError("no solutions to score")
    edges = solutions[0].edges
    slots = {i: [n for n, e in sorted(enumerate(edges), key=lambda t: t[1][1]) if e[0] == i] for i in case.sources}
    cache: dict = {}
    for s in solutions:
        total = 0.0
        for i, idx in slots.items():
            h = tuple(s.counts[n] for n in idx)
            key = (i, h)
            lw = cache.get(key)
            if lw is None:
                lw = cache[key] = log_omega_multi(contexts[i], h)
            total += lw
            if total == NEG_INF:
                break
        s.log_weight = total
    return normalize_posteriors(solutions, case.case_id)


def normalize_posteriors(solutions: list[CandidateSolution], case_id: str = "?"):
    """Posteriors from log weights by log-sum-exp; returns ``solutions``."""
    norm = logsumexp(s.log_weight for s in solutions)
    if norm == NEG_INF:
        raise DegenerateCaseError(f"case {case_id}: every allocation has zero likelihood")
    for s in solutions:
        s.posterior = math.exp(s.log_weight - norm) if s.log_weight != NEG_INF else 0.0
    return solutions


def _groups(solutions: Iterable[CandidateSolution]) -> list:
    """(support, merged posterior) sorted heaviest first, ties by smallest support."""
    acc: dict = {}
    for s in solutions:
        acc.setdefault(s.support, []).append(s.posterior)
    merged = [(sup, math.fsum(ps)) for sup, ps in acc.items()]
    merged.sort(key=lambda t: (-t[1], t[0]))
    return merged


def merge_and_select(solutions: list[CandidateSolution], case: InvasionCase | None = None) -> IdentifiedPathway:
    """Group by support, winner = heaviest group; exact ties go to the smallest support."""
    groups = _groups(solutions)
    top = groups[0][1]
    tied = [g for g in groups if g[1] >= top - TIE_TOL * max(top, 1.0)]
    support, pi = min(tied, key=lambda g: g[0])
    return IdentifiedPathway(case, support, pi, len(solutions), tie=len(tied) > 1, groups=groups)


def _h2(p: float) -> float:
    return -p * math.log2(p) if p > 0 else 0.0


def _report(entropy_bits, M, p_single, pi, weights_top, weights_second, weights_min, G) -> IdentifiabilityReport:
    """Identifiability and its bounds from summary statistics of the posterior.

    ``weights_*`` are merged (per support) posteriors: largest, runner-up
    (None if G == 1) and smallest.
    """
    p_upper = 1.0 if weights_second is None else weights_top / (weights_top + weights_second)
    p_lower = max(1.0 / G, weights_top / (weights_min + 1.0))
    if M == 1:
        return IdentifiabilityReport(0.0, pi, pi, p_single, 1, G, pi, pi, pi, p_lower, p_upper)
    logM = math.log2(M)
    S = min(max(entropy_bits / logM, 0.0), 1.0)
    Pi = pi * (1.0 - S)
    # largest entropy with top mass p_single (rest uniform)
    rest = 1.0 - p_single
    fano = _h2(p_single) + (rest * (math.log2(M - 1) - math.log2(rest)) if rest > 0 else 0.0)
    pi_lower = (1.0 - min(fano / logM, 1.0)) / M
    # smallest entropy with top mass p_single: as many copies of it as fit
    copies = math.floor(1.0 / p_single + 1e-12)
    remainder = max(1.0 - copies * p_single, 0.0)
    least = (copies * _h2(p_single) + _h2(remainder)) / logM
    pi_upper = pi * (1.0 - min(least, 1.0))
    # pi - H(pi p) / log M, using H(pi p) = pi H(p) - pi log pi
    literal = pi - (pi * entropy_bits + _h2(pi)) / logM
    return IdentifiabilityReport(S, Pi, pi, p_single, M, G, pi_lower, pi_upper, literal, p_lower, p_upper)


def compute_identifiability(solutions: list[CandidateSolution], pi: float) -> IdentifiabilityReport:
    post = [s.posterior for s in solutions]
    weights = [w for _, w in _groups(solutions)]
    return _report(
        math.fsum(_h2(p) for p in post), len(post), max(post), pi,
        weights[0], weights[1] if len(weights) > 1 else None, weights[-1], len(weights),
    )


def allocation_bound(case: InvasionCase) -> int:
    """Number of allocations ignoring source capacities (an upper bound on M)."""
    total = 1
    for k in case.destinations:
        y = len(case.edges_into(k))
        total *= math.comb(case.arrivals[k] + y - 1, y - 1)
    return total


def _marginal_context(ctx: SourceContext, position: int) -> SourceContext:
    """Source context seen by a single invasion edge; the others join the hidden edges."""
    rates = ctx.invasion_rates
    others = math.fsum(rates[:position] + rates[position + 1:])
    return SourceContext(ctx.prev, ctx.now, (rates[position],), ctx.hidden_edge_mass + others,
                         ctx.stay, ctx.observable_mass)


def _identify_factorized(case: InvasionCase, view: ObservabilityView, network: MetapopNetwork) -> IdentifiedPathway:
    """Treat every destination as its own mI->S sub-case with marginal estimators.

    The joint posterior is the product of the per-destination posteriors, so
    the winning support is the union of per-destination winners.
    """
    full = source_contexts(case, view, network)
    support, pi, M, G, tie, err = [], 1.0, 1, 1, False, 0.0
    bits, p_single, top, smallest, runner_ratio = 0.0, 1.0, 1.0, 1.0, None
    for k in case.destinations:
        into = tuple(case.edges_into(k))
        sub = InvasionCase(case.tick, case.index, tuple(e[0] for e in into), (k,), into, {k: case.arrivals[k]})
        ctx = {}
        for i, _ in into:
            dests = sorted(d for _, d in case.edges_from(i))
            ctx[i] = _marginal_context(full[i], dests.index(k))
        sols = enumerate_solutions(sub, view)
        score_solutions(sub, ctx, sols)
        chosen = merge_and_select(sols, sub)
        weights = [w for _, w in chosen.groups]
        support.extend(chosen.support)
        pi *= chosen.pi
        M *= len(sols)
        G *= len(weights)
        tie = tie or chosen.tie
        err = max(err, abs(math.fsum(s.posterior for s in sols) - 1.0))
        bits += math.fsum(_h2(s.posterior) for s in sols)
        p_single *= max(s.posterior for s in sols)
        top *= weights[0]
        smallest *= weights[-1]
        if len(weights) > 1:
            ratio = weights[1] / weights[0]
            runner_ratio = ratio if runner_ratio is None else max(runner_ratio, ratio)
    second = None if runner_ratio is None else top * runner_ratio
    report = _report(bits, M, p_single, pi, top, second, smallest, G)
    return IdentifiedPathway(case, tuple(sorted(support)), pi, M, tie=tie, method="factorized", report=report,
                             posterior_error=err)


# ------------------------------------------------------------ per case / whole


def identify_case(
    case: InvasionCase,
    view: ObservabilityView,
    network: MetapopNetwork,
    use_theorems: bool = True,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
) -> IdentifiedPathway:
    """Identify one case.

    Cases with more than ``exact_limit`` candidate allocations are
    factorised per destination instead of enumerated jointly.
    """
    cls = case.case_class
    if not cls.ambiguous:
        return IdentifiedPathway(case, case.invasion_edges, 1.0, 1, unique=True, method="forced",
                                 groups=[(case.invasion_edges, 1.0)])
    inconsistent = False
    if use_theorems:
        try:
            if cls is CaseClass.MI_S:
                alloc, name = theorem1_unique(case, view), "theorem1"
            else:
                alloc, name = theorem2_unique(case, view), "theorem2"
        except DataInconsistencyError as exc:
            log.warning("%s; falling back to enumeration", exc)
            alloc, name, inconsistent = None, None, True
        if alloc is not None:
            support = tuple(e for e in case.invasion_edges if alloc.get(e, 0) > 0)
            return IdentifiedPathway(case, support, 1.0, 1, unique=True, method=name, groups=[(support, 1.0)])
    if allocation_bound(case) > exact_limit:
        return _identify_factorized(case, view, network)
    solutions = enumerate_solutions(case, view)
    score_solutions(case, source_contexts(case, view, network), solutions)
    result = merge_and_select(solutions, case)
    result.report = compute_identifiability(solutions, result.pi)
    result.theorem_inconsistent = inconsistent
    result.posterior_error = abs(math.fsum(s.posterior for s in solutions) - 1.0)
    return result


@dataclass
class DegenerateCase:
    case: InvasionCase
    reason: str


@dataclass
class IPIResult:
    pathways: list              # IdentifiedPathway in tick order
    degenerate: list            # DegenerateCase
    tree: PathwayTree
    cases: list = field(default_factory=list)  # (InvasionCase, ObservabilityView) pairs

    def by_case(self) -> dict:
        return {p.case.case_id: p for p in self.pathways}


def assemble_tree(pathways: Iterable[IdentifiedPathway], root: int) -> PathwayTree:
    """Chronological union of per-case supports, annotated per edge."""
    edges = []
    for p in sorted(pathways, key=lambda p: (p.case.tick, p.case.index)):
        r = p.report
        for src, dst in p.support:
            edges.append(PathwayEdge(
                src, dst, p.case.tick, p.case.case_id, p.case_class.value,
                p.pi, r.entropy, r.identifiability, p.unique,
            ))
    return PathwayTree(root, edges, "ipi")


def _root_of(series: SurveillanceSeries) -> int:
    seeded = [int(j) for j in range(series.node_count) if series.counts[0, j] > 0]
    return seeded[0] if seeded else -1


def identify(
    series: SurveillanceSeries,
    network: MetapopNetwork,
    use_theorems: bool = True,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
) -> IPIResult:
    """Whole pipeline: events, partition, per-case identification, tree."""
    if series.node_count != network.node_count:
        raise DataInconsistencyError(
            f"series has {series.node_count} nodes, network has {network.node_count}"
        )
    pathways, degenerate = [], []
    cases = anatomize(series, network)
    for case, view in cases:
        try:
            pathways.append(identify_case(case, view, network, use_theorems, exact_limit))
        except (DegenerateCaseError, DataInconsistencyError) as exc:
            # e.g. hosts infected and moved within the same tick push arrivals past I(t-1)
            log.warning("skipping case %s: %s", case.case_id, exc)
            degenerate.append(DegenerateCase(case, str(exc)))
    return IPIResult(pathways, degenerate, assemble_tree(pathways, _root_of(series)), cases)


def pathway_record(p: IdentifiedPathway) -> dict:
    rec = {
        "case_id": p.case.case_id,
        "tick": p.case.tick,
        "class": p.case_class.value,
        "sources": list(p.case.sources),
        "destinations": list(p.case.destinations),
        "method": p.method,
        "support": [list(e) for e in p.support],
        "unique": p.unique,
        "tie": p.tie,
        "theorem_inconsistent": p.theorem_inconsistent,
    }
    rec.update(p.report.to_dict())
    return rec


def write_report(result: IPIResult, path) -> None:
    doc = {
        "cases": [pathway_record(p) for p in result.pathways],
        "degenerate": [{"case_id": d.case.case_id, "reason": d.reason} for d in result.degenerate],
        "summary": {
            "cases": len(result.pathways),
            "degenerate": len(result.degenerate),
            "edges": len(result.tree),
            "bound_violations": sum(p.report.bound_violation for p in result.pathways),
            "ties": sum(p.tie for p in result.pathways),
            "by_method": {
                m: sum(p.method == m for p in result.pathways)
                for m in ("forced", "theorem1", "theorem2", "enumeration", "factorized")
            },
        },
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
