import numpy as np
import pytest
from scipy import stats

from pathfinder.errors import ConfigError
from pathfinder.netgen import NetGenConfig, generate_network
from pathfinder.network import MetapopNetwork
from pathfinder.simulate import (
    SimConfig,
    SimState,
    check_truth_completeness,
    diffuse,
    load_truth,
    react,
    run,
    save_truth,
)


def state(S, I):
    return SimState(np.array(S, dtype=np.int64), np.array(I, dtype=np.int64))


def pair(p=0.1):
    return MetapopNetwork.from_edges([100, 100], [(0, 1, p), (1, 0, p)])


def test_react_leaves_uninfected_nodes_and_zero_beta_alone():
    net = pair()
    out = react(state([100, 90], [0, 10]), net, 0.3, 1, 1)
    assert out.I[0] == 0 and out.S[0] == 100
    assert react(state([100, 90], [0, 10]), net, 0.0, 1, 1).I.tolist() == [0, 10]


def test_react_mean_matches_binomial():
    net = MetapopNetwork.from_edges([1000], [])
    s = state([900], [100])
    draws = [react(s, net, 0.3, seed, 1).I[0] - 100 for seed in range(4000)]
    # Binomial(900, 0.03): mean 27, sd 5.12, so the mean of 4000 draws has sd 0.081
    assert np.mean(draws) == pytest.approx(27, abs=0.4)


def _chi2_pvalue(observed, probs):
    observed = np.asarray(observed, dtype=float)
    expected = observed.sum() * np.asarray(probs)
    return stats.chisquare(observed, expected).pvalue


def test_diffuse_stay_probability_for_a_group():
    # ten infected, 0.9 stay each: all ten stay with probability 0.9**10
    net = pair(0.1)
    s = state([90, 100], [10, 0])
    stays = sum(int(diffuse(s, net, seed, 1)[0].I[0] == 10) for seed in range(20000))
    p = 0.9 ** 10
    assert _chi2_pvalue([stays, 20000 - stays], [p, 1 - p]) > 1e-3


def test_diffuse_single_host_edge_probability():
    net = MetapopNetwork.from_edges([10, 10, 10], [(0, 1, 0.04), (0, 2, 0.16)])
    s = state([9, 10, 10], [1, 0, 0])
    hits = np.zeros(3)
    for seed in range(20000):
        new, _ = diffuse(s, net, seed, 1)
        hits[int(np.argmax(new.I))] += 1
    assert _chi2_pvalue(hits, [0.8, 0.04, 0.16]) > 1e-3


def test_diffuse_conserves_and_reports_moves():
    net = generate_network(NetGenConfig(node_count=60, seed=1))
    rng = np.random.default_rng(0)
    I = rng.integers(0, 5, 60)
    s = SimState(net.populations - I, I)
    new, moves = diffuse(s, net, 3, 2)
    assert new.S.sum() + new.I.sum() == net.populations.sum()
    assert new.I.sum() == I.sum()
    assert (new.S >= 0).all() and (new.I >= 0).all()
    recon = I.copy()
    for src, dst, cnt in moves.tolist():
        assert net.rate(src, dst) > 0
        recon[src] -= cnt
        recon[dst] += cnt
    assert recon.tolist() == new.I.tolist()


def test_run_is_deterministic_and_complete():
    net = generate_network(NetGenConfig(node_count=150, seed=5))
    cfg = SimConfig(rng_seed=9)
    a, ta = run(net, cfg)
    b, tb = run(net, cfg)
    assert a == b and ta.moves == tb.moves
    assert check_truth_completeness(a, ta) == []
    assert (a.populations.sum(axis=1) == net.populations.sum()).all()
    c, _ = run(net, SimConfig(rng_seed=10))
    assert c != a


def test_no_spread_without_mobility_or_infection():
    net = MetapopNetwork.from_edges([100, 100], [(0, 1, 0.0), (1, 0, 0.0)])
    series, truth = run(net, SimConfig(beta=0.0, max_ticks=20))
    assert (series.counts[:, 0] == 5).all() and (series.counts[:, 1] == 0).all()
    assert truth.moves == []


def test_star_hub_seeds_every_leaf():
    leaves = list(range(1, 8))
    edges = [(0, j, 0.05) for j in leaves] + [(j, 0, 0.05) for j in leaves]
    net = MetapopNetwork.from_edges([500] * 8, edges)
    series, truth = run(net, SimConfig(beta=0.4, rng_seed=2, max_ticks=200))
    for j in leaves:
        first = truth.first_arrival(j)
        assert first is not None and set(first.sources) == {0}


def test_stop_rules():
    net = generate_network(NetGenConfig(node_count=80, seed=2))
    series, _ = run(net, SimConfig(max_ticks=500))
    assert (series.counts[-1] > 0).all() and series.ticks < 500
    series, _ = run(net, SimConfig(max_ticks=7, stop_rule="tick-limit"))
    assert series.ticks == 7


def test_config_errors():
    net = pair()
    with pytest.raises(ConfigError):
        SimConfig(beta=-1).check()
    with pytest.raises(ConfigError):
        SimConfig(seed_node=5).check(net)
    with pytest.raises(ConfigError):
        SimConfig(seed_infected=500).check(net)
    with pytest.raises(ConfigError):
        SimConfig(stop_rule="forever").check()


def test_truth_round_trip(tmp_path):
    net = generate_network(NetGenConfig(node_count=100, seed=3))
    _, truth = run(net, SimConfig(rng_seed=4))
    path = tmp_path / "truth.csv"
    save_truth(truth, path)
    back = load_truth(path)
    assert back.moves == truth.moves
    assert back.pathway_edges() == truth.pathway_edges()
    assert back.seed_node == truth.seed_node and back.seed_infected == truth.seed_infected


def test_reinvaded_node_gets_a_second_epoch():
    # node 1 empties back into node 0 and is later invaded again
    net = MetapopNetwork.from_edges([50, 50], [(0, 1, 0.3), (1, 0, 0.9)])
    series, truth = run(net, SimConfig(beta=0.0, seed_infected=3, max_ticks=60, stop_rule="tick-limit", rng_seed=1))
    epochs = truth.arrivals.get(1, [])
    reentries = sum(1 for t in range(1, series.ticks + 1)
                    if series.counts[t - 1, 1] == 0 and series.counts[t, 1] > 0)
    assert len(epochs) == reentries >= 2
    assert check_truth_completeness(series, truth) == []
