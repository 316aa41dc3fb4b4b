import numpy as np
import pytest

from pathfinder.anatomy import (
    CaseClass,
    EdgeClass,
    Observability,
    anatomize,
    classify_observability,
    detect_events,
    dump_cases,
    invasion_partition,
    load_cases,
    node_view,
)
from pathfinder.errors import DataInconsistencyError
from pathfinder.netgen import NetGenConfig, generate_network
from pathfinder.network import MetapopNetwork, SurveillanceSeries
from pathfinder.simulate import SimConfig, run


def undirected(n, pairs, p=0.05, pop=100):
    edges = []
    for a, b in pairs:
        edges += [(a, b, p), (b, a, p)]
    return MetapopNetwork.from_edges([pop] * n, edges)


def series(*rows):
    return SurveillanceSeries(np.array(rows))


def test_case_class_of():
    assert CaseClass.of(1, 1) is CaseClass.I_S
    assert CaseClass.of(1, 3) is CaseClass.I_NS
    assert CaseClass.of(2, 1) is CaseClass.MI_S
    assert CaseClass.of(2, 2) is CaseClass.MI_NS
    assert CaseClass.MI_S.ambiguous and not CaseClass.I_NS.ambiguous
    with pytest.raises(ValueError):
        CaseClass.of(0, 1)


@pytest.mark.parametrize(
    "prev, now, cls, transition",
    [
        (0, 0, Observability.OBSERVABLE, "S->S"),
        (0, 4, Observability.OBSERVABLE, "S->I"),
        (3, 0, Observability.OBSERVABLE, "I->S"),
        (3, 1, Observability.PARTIAL, "I->I"),
        (3, 3, Observability.UNOBSERVABLE, "I->I"),
        (3, 7, Observability.UNOBSERVABLE, "I->I"),
    ],
)
def test_node_view(prev, now, cls, transition):
    nv = node_view(prev, now)
    assert nv.cls is cls and nv.transition == transition
    assert nv.drop == max(prev - now, 0)


def test_path_graph_splits_into_two_cases():
    # 0 - 1 - 2 - 3 - 4 with 1 and 3 infected; 0, 2, 4 newly infected
    net = undirected(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    s = series([0, 2, 0, 0, 0], [1, 1, 1, 0, 0])
    (event,) = detect_events(s, net)
    assert event.new_nodes == (0, 2)
    cases = invasion_partition(event, net)
    assert len(cases) == 1 and cases[0].case_class is CaseClass.I_NS

    s = series([0, 2, 0, 3, 0], [1, 1, 0, 2, 1])
    cases = invasion_partition(detect_events(s, net)[0], net)
    assert [c.destinations for c in cases] == [(0,), (4,)]
    assert [c.case_class for c in cases] == [CaseClass.I_S, CaseClass.I_S]


def test_shared_destination_joins_sources():
    # sources 0 and 2 both touch destination 1, which links everything
    net = undirected(4, [(0, 1), (2, 1), (2, 3)])
    s = series([2, 0, 2, 0], [1, 1, 1, 1])
    (case,) = invasion_partition(detect_events(s, net)[0], net)
    assert case.sources == (0, 2) and case.destinations == (1, 3)
    assert case.invasion_edges == ((0, 1), (2, 1), (2, 3))
    assert case.case_class is CaseClass.MI_NS
    assert case.arrivals == {1: 1, 3: 1}


def test_edges_classified_against_neighbour_transitions():
    # source 0 with neighbours: 1 new, 2 empty, 3 emptied, 4 dropping, 5 growing
    net = MetapopNetwork.from_edges([100] * 6, [(0, j, 0.02) for j in range(1, 6)] +
                                    [(j, 0, 0.02) for j in range(1, 6)])
    s = series([4, 0, 0, 2, 5, 1], [3, 1, 0, 0, 4, 2])
    (case,) = invasion_partition(detect_events(s, net)[0], net)
    view = classify_observability(case, s, net)
    assert view.edges == {
        (0, 1): EdgeClass.INVASION,
        (0, 2): EdgeClass.OBSERVABLE,
        (0, 3): EdgeClass.OBSERVABLE,
        (0, 4): EdgeClass.PARTIAL,
        (0, 5): EdgeClass.UNOBSERVABLE,
    }
    assert view.nodes[0].cls is Observability.PARTIAL and view.drop(0) == 1


def test_infection_without_infected_neighbour_is_inconsistent():
    net = undirected(3, [(0, 1)])
    with pytest.raises(DataInconsistencyError):
        detect_events(series([1, 0, 0], [1, 0, 1]), net)


def test_reinfection_opens_a_new_event():
    net = undirected(2, [(0, 1)])
    s = series([1, 0], [1, 1], [1, 0], [1, 2])
    assert [e.tick for e in detect_events(s, net)] == [1, 3]


def test_partition_covers_every_new_node_once():
    net = generate_network(NetGenConfig(node_count=200, seed=8))
    s, truth = run(net, SimConfig(rng_seed=8))
    pairs = anatomize(s, net)
    seen = {}
    for case, view in pairs:
        for j in case.destinations:
            assert (case.tick, j) not in seen
            seen[(case.tick, j)] = case.case_id
        for i, j in case.invasion_edges:
            assert i in case.sources and j in case.destinations and net.rate(i, j) > 0
            assert view.edges[(i, j)] is EdgeClass.INVASION
        for i in case.sources:
            assert s.counts[case.tick - 1, i] > 0
    fresh = {(t, j) for t in range(1, s.ticks + 1) for j in range(200)
             if s.counts[t - 1, j] == 0 and s.counts[t, j] > 0}
    assert set(seen) == fresh
    # true sources are always among the case sources
    by_key = {(c.tick, j): c for c, _ in pairs for j in c.destinations}
    for a in truth.all_arrivals():
        if a.tick:
            assert set(a.sources) <= set(by_key[(a.tick, a.node)].sources)


def test_dump_and_load_round_trip(tmp_path):
    net = generate_network(NetGenConfig(node_count=100, seed=1))
    s, _ = run(net, SimConfig(rng_seed=1))
    pairs = anatomize(s, net)
    path = tmp_path / "cases.jsonl"
    dump_cases(pairs, path)
    assert load_cases(path) == [c for c, _ in pairs]
