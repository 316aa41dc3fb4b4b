import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathfinder.anatomy import Observability
from pathfinder.estimators import (
    SourceContext,
    log_multinomial,
    log_omega_multi,
    logsumexp,
    omega_multi,
    omega_single,
)

from oracles import LabeledSource, omega as oracle_omega


def ctx_of(src: LabeledSource) -> SourceContext:
    return SourceContext(src.prev, src.now, tuple(src.invasion), math.fsum(src.hidden), src.stay,
                         math.fsum(src.observable))


def random_source(rng, max_prev=4, max_edges=4) -> LabeledSource:
    prev = int(rng.integers(1, max_prev + 1))
    now = int(rng.integers(0, prev + 3))
    n_inv = int(rng.integers(1, max_edges + 1))
    n_hid = int(rng.integers(0, 3))
    n_obs = int(rng.integers(0, 3))
    raw = rng.dirichlet(np.ones(n_inv + n_hid + n_obs + 1)) * rng.uniform(0.2, 0.99)
    raw = raw.tolist()
    inv, hid, obs = raw[:n_inv], raw[n_inv:n_inv + n_hid], raw[n_inv + n_hid:n_inv + n_hid + n_obs]
    stay = 1.0 - math.fsum(raw[:-1])
    return LabeledSource(prev, now, tuple(inv), tuple(hid), tuple(obs), stay)


# ---------------------------------------------------------------- worked values


def test_unobservable_single_edge_value():
    ctx = SourceContext(2, 2, (0.1,), 0.0, 0.9)
    assert omega_single(ctx, 1) == pytest.approx(2 * 0.1 * 0.9, abs=1e-15)


def test_unobservable_returns_p_to_the_k_when_all_travel():
    ctx = SourceContext(3, 5, (0.2,), 0.1, 0.7)
    assert omega_single(ctx, 3) == pytest.approx(0.2 ** 3, rel=1e-12)


def test_observable_single_edge_value():
    # two hosts left, the invasion edge carries half of the leaving mass
    ctx = SourceContext(2, 0, (0.5,), 0.5, 0.0)
    assert omega_single(ctx, 1) == pytest.approx(0.5, rel=1e-12)


def test_multi_edge_unobservable_value():
    ctx = SourceContext(2, 2, (0.1, 0.1), 0.0, 0.8)
    assert omega_multi(ctx, (1, 1)) == pytest.approx(0.02, rel=1e-12)


def test_observable_source_cannot_send_more_than_it_lost():
    ctx = SourceContext(3, 0, (0.3,), 0.2, 0.5)
    # all three left, so at most three arrived; with no hidden edge all must arrive
    only = SourceContext(3, 0, (0.3,), 0.0, 0.7)
    assert omega_single(only, 3) == pytest.approx(1.0)
    assert omega_single(only, 2) == 0.0
    assert 0 < omega_single(ctx, 1) < 1


def test_multi_with_one_edge_equals_single():
    ctx = SourceContext(4, 2, (0.15,), 0.05, 0.8)
    for h in range(5):
        assert omega_multi(ctx, (h,)) == omega_single(ctx, h)


def test_classification_from_counts():
    assert SourceContext(3, 5, (0.1,), 0, 0.9).observability is Observability.UNOBSERVABLE
    assert SourceContext(3, 1, (0.1,), 0, 0.9).observability is Observability.PARTIAL
    assert SourceContext(3, 0, (0.1,), 0, 0.9).observability is Observability.OBSERVABLE


def test_invalid_contexts_rejected():
    with pytest.raises(ValueError):
        SourceContext(0, 0, (0.1,), 0, 0.9)
    with pytest.raises(ValueError):
        SourceContext(1, 1, (), 0, 0.9)
    with pytest.raises(ValueError):
        SourceContext(1, 1, (0.6,), 0.3, 0.3)
    with pytest.raises(ValueError):
        omega_single(SourceContext(2, 2, (0.1,), 0, 0.9), 3)
    with pytest.raises(ValueError):
        omega_multi(SourceContext(2, 2, (0.1, 0.1), 0, 0.8), (2, 1))


def test_large_population_stays_finite():
    ctx = SourceContext(10**6, 10**6 - 3, (0.01, 0.02), 0.05, 0.9)
    lw = log_omega_multi(ctx, (2, 1))
    assert math.isfinite(lw)
    assert lw < 0


def test_logsumexp_handles_empty_and_infinite():
    assert logsumexp([]) == -math.inf
    assert logsumexp([-math.inf, -math.inf]) == -math.inf
    assert logsumexp([0.0, 0.0]) == pytest.approx(math.log(2))
    assert logsumexp([-1000.0, -1000.0]) == pytest.approx(-1000 + math.log(2))


def test_log_multinomial_matches_direct_formula():
    direct = math.factorial(5) / (math.factorial(2) * math.factorial(1) * math.factorial(2)) * 0.2**2 * 0.3 * 0.5**2
    assert math.exp(log_multinomial([2, 1], 2, [0.2, 0.3], 0.5)) == pytest.approx(direct, rel=1e-12)


# ---------------------------------------------------------------- oracle


def test_matches_labeled_enumeration_on_random_contexts():
    rng = np.random.default_rng(20240501)
    checked = 0
    for _ in range(200):
        src = random_source(rng)
        ctx = ctx_of(src)
        for h in itertools.product(range(src.prev + 1), repeat=len(src.invasion)):
            if sum(h) > src.prev:
                continue
            assert omega_multi(ctx, h) == pytest.approx(oracle_omega(src, h), abs=1e-10, rel=1e-8)
            checked += 1
    assert checked > 1000


# ---------------------------------------------------------------- marginal identities

rates = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@st.composite
def contexts(draw, max_edges=3, max_prev=6):
    prev = draw(st.integers(1, max_prev))
    now = draw(st.integers(0, prev + 2))
    n = draw(st.integers(1, max_edges))
    w = [draw(st.floats(0.01, 1.0)) for _ in range(n + 3)]
    scale = draw(st.floats(0.05, 0.99))
    tot = sum(w)
    parts = [x / tot * scale for x in w]
    stay = 1.0 - scale + parts[-1]
    return SourceContext(prev, now, tuple(parts[:n]), parts[n], stay, parts[n + 1])


def _total(ctx):
    return math.fsum(
        omega_multi(ctx, h)
        for h in itertools.product(range(ctx.prev + 1), repeat=ctx.rho)
        if sum(h) <= ctx.prev
    )


@settings(max_examples=150, deadline=None)
@given(contexts())
def test_marginal_identity(ctx):
    """Summing over every allocation leaves only the 'nobody on observable edges' mass."""
    untracked = ctx.prev - (ctx.drop if ctx.observability is not Observability.UNOBSERVABLE else 0)
    expected = (1.0 - ctx.observable_mass) ** untracked
    assert _total(ctx) == pytest.approx(expected, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(contexts(max_edges=1))
def test_binomial_identity_unobservable(ctx):
    # Sum_h C(a,h) p^h q^(a-h) = (p + q)^a
    ctx = SourceContext(ctx.prev, ctx.prev, ctx.invasion_rates, ctx.hidden_edge_mass, ctx.stay, ctx.observable_mass)
    p, q = ctx.invasion_rates[0], ctx.hidden_mass
    assert _total(ctx) == pytest.approx((p + q) ** ctx.prev, abs=1e-10)
