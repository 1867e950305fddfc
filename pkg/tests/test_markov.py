import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bufrelay.channel import LinkConfig, RegionProbs, db_to_linear, region_probs_exact
from bufrelay.markov import (ChainError, NumericalBreakdown, StateSpace, TransitionMatrix,
                             build_generic, build_prop1, build_te_min, closed_form_min_delay,
                             evaluate, lemma1_min_delays, metrics, prop3_occupancy, reduce,
                             stationary)
from bufrelay.policy import PolicyKind, Thresholds

DE, TE = PolicyKind.DELAY_EFFICIENT, PolicyKind.THROUGHPUT_EFFICIENT
T0 = Thresholds(0, 0)
ALL_R5 = RegionProbs((0, 0, 0, 0, 1))
ALL_R1 = RegionProbs((1, 0, 0, 0, 0))
C = LinkConfig(1, 1, 10)


def random_probs(rng):
    return RegionProbs.random(rng)


probs_st = st.lists(st.floats(0.01, 1), min_size=5, max_size=5).map(
    lambda w: RegionProbs(tuple(np.array(w) / math.fsum(w))[:4] + (1 - math.fsum(np.array(w[:4]) / math.fsum(w)),)))


def assert_one_step(tm):
    states = tm.space.states
    for col, (a1, a2) in enumerate(states):
        for row, (b1, b2) in enumerate(states):
            d1, d2 = b1 - a1, b2 - a2
            if abs(d1) > 1 or abs(d2) > 1 or d1 * d2 < 0:
                assert tm.m[row, col] == 0.0


def test_state_enumeration_l2_major():
    s = StateSpace.full((2, 1))
    assert s.states == ((0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1))


@settings(max_examples=40, deadline=None)
@given(probs_st, st.integers(0, 3), st.integers(0, 3), st.sampled_from([DE, TE]))
def test_generic_is_stochastic_with_one_step_moves(p, t1, t2, kind):
    tm = build_generic(p, Thresholds(t1, t2), (3, 4), kind)
    assert np.abs(tm.m.sum(axis=0) - 1).max() < 1e-12
    assert tm.m.min() >= 0
    assert_one_step(tm)


@settings(max_examples=40, deadline=None)
@given(probs_st, st.integers(0, 2), st.integers(0, 2))
def test_closed_form_builders_are_stochastic(p, t1, t2):
    # the delay-efficient closed form covers thresholds strictly below the caps
    for tm in (build_prop1(p, Thresholds(t1, t2), (3, 3)), build_te_min(p, (3, 3))):
        assert np.abs(tm.m.sum(axis=0) - 1).max() < 1e-12
        assert_one_step(tm)


def test_all_r5_is_identity():
    for kind in (DE, TE):
        tm = build_generic(ALL_R5, T0, (3, 3), kind)
        assert np.array_equal(tm.m, np.eye(len(tm.space)))
        red = reduce(tm)
        assert red.space.states == ((0, 0),)
        m = metrics(stationary(red), red, C)
        assert m.r_sum == 0 and m.f_sys == 1
        assert math.isnan(m.t1_bar)


def test_generic_transition_examples():
    p = region_probs_exact(C)
    tm = build_generic(p, T0, (10, 10), DE)
    assert tm.prob((0, 0), (1, 0)) == pytest.approx(p.p2 / 2 + p.p3, abs=1e-15)
    assert tm.prob((1, 1), (0, 0)) == pytest.approx(p.p1 + p.p2, abs=1e-15)


def test_closed_form_stay_probability():
    p = region_probs_exact(C)
    tm = build_prop1(p, Thresholds(2, 3), (10, 10))
    for l1 in (3, 4, 7):
        assert tm.prob((l1, 0), (l1, 0)) == pytest.approx(p.p5 + p.p3, abs=1e-15)


def test_te_min_examples():
    p = region_probs_exact(LinkConfig(0.25, 1, 30))
    tm = build_te_min(p, (10, 10))
    assert tm.prob((4, 0), (3, 0)) == pytest.approx(p.p2 + p.p4, abs=1e-15)
    assert tm.prob((10, 0), (9, 0)) == pytest.approx(p.p1 + p.p2 + p.p4, abs=1e-15)


@pytest.mark.parametrize("caps", [(3, 3), (5, 4), (1, 1), (2, 1)])
def test_te_min_matches_generic(caps):
    rng = np.random.default_rng(4)
    for _ in range(20):
        p = random_probs(rng)
        d = np.abs(build_te_min(p, caps).m - build_generic(p, T0, caps, TE).m).max()
        assert d < 1e-12


@pytest.mark.parametrize("caps", [(3, 3), (5, 4), (1, 1)])
def test_delay_closed_form_matches_generic_at_zero_thresholds(caps):
    rng = np.random.default_rng(5)
    for _ in range(20):
        p = random_probs(rng)
        assert np.abs(build_prop1(p, T0, caps).m - build_generic(p, T0, caps, DE).m).max() < 1e-12


def test_reduced_space_at_zero_thresholds():
    red = reduce(build_generic(region_probs_exact(C), T0, (10, 10), DE))
    assert set(red.space.states) == {(0, 0), (1, 0), (0, 1), (1, 1)}
    assert red.space.reduced
    assert np.abs(red.m.sum(axis=0) - 1).max() < 1e-12


@pytest.mark.parametrize("t1, t2", [(0, 3), (2, 2), (4, 1), (5, 5)])
def test_states_beyond_threshold_unreachable(t1, t2):
    red = reduce(build_generic(region_probs_exact(C), Thresholds(t1, t2), (10, 10), DE))
    assert all(l1 <= t1 + 1 and l2 <= t2 + 1 for l1, l2 in red.space.states)


def _power_iteration(m, steps):
    pi = np.full(len(m), 1 / len(m))
    for _ in range(steps):
        pi = m @ pi
    return pi


def test_stationary_matches_power_iteration():
    rng = np.random.default_rng(9)
    m = rng.random((5, 5))
    m /= m.sum(axis=0)
    space = StateSpace(tuple((i, 0) for i in range(5)), (4, 1))
    dist = stationary(TransitionMatrix(space, m))
    assert np.abs(dist.pi - _power_iteration(m, 10**5)).max() < 1e-9
    assert dist.pi.sum() == pytest.approx(1, abs=1e-10)


def test_stationary_single_state_and_reducible():
    one = StateSpace(((0, 0),), (1, 1))
    assert stationary(TransitionMatrix(one, np.eye(1))).pi.tolist() == [1.0]
    two = StateSpace(((0, 0), (1, 0)), (1, 1))
    with pytest.raises(ChainError):
        stationary(TransitionMatrix(two, np.eye(2)))


def test_origin_occupancy_formula():
    p = region_probs_exact(C)
    p1, p2, p3, p4, p5 = p
    a = p1 / (1 - p5)
    b = (p3 + p2 / 2 + p1 * p3 / (1 - p5)) / (1 - p3 - p5)
    c = (p4 + p2 / 2 + p1 * p4 / (1 - p5)) / (1 - p4 - p5)
    res = evaluate(C, T0, (10, 10), DE, p)
    assert res.dist[0, 0] == pytest.approx(1 / (1 + a + b + c), abs=1e-12)


def test_perfect_links():
    res = evaluate(C, T0, (10, 10), DE, ALL_R1)
    m = res.metrics
    assert (m.r12, m.r21, m.t1_bar, m.t2_bar) == pytest.approx((0.5, 0.5, 1, 1), abs=1e-12)
    cf = closed_form_min_delay(ALL_R1, 1.0)
    assert (cf.t1_bar, cf.t2_bar, cf.r12, cf.r21) == pytest.approx((1, 1, 0.5, 0.5))


def test_closed_form_against_pipeline():
    rng = np.random.default_rng(12)
    for _ in range(20):
        p = random_probs(rng)
        tm = reduce(build_prop1(p, T0, (10, 10)))
        m = metrics(stationary(tm), tm, LinkConfig(1, 1, 1, 1.0))
        cf = closed_form_min_delay(p, 1.0)
        for key in ("r12", "r21", "q1_bar", "q2_bar", "t1_bar", "t2_bar"):
            assert getattr(m, key) == pytest.approx(getattr(cf, key), abs=1e-10)


def test_min_delay_exponential_tail():
    p = region_probs_exact(LinkConfig(1, 1, 1))
    assert closed_form_min_delay(p, 1).t1_bar == pytest.approx(math.e, rel=1e-12)
    c = LinkConfig(0.25, 1, 10)
    t1, t2 = lemma1_min_delays(region_probs_exact(c))
    assert t1 == pytest.approx(math.exp(c.gamma_thr / c.mean_snr2), rel=1e-12)
    assert t2 == pytest.approx(math.exp(c.gamma_thr / c.mean_snr1), rel=1e-12)


def test_delay_floor_and_metric_invariants():
    rng = np.random.default_rng(13)
    for _ in range(15):
        p = random_probs(rng)
        floor = lemma1_min_delays(p)
        for kind, t in itertools.product((DE, TE), (T0, Thresholds(1, 2), Thresholds(3, 3))):
            m = evaluate(C, t, (4, 4), kind, p).metrics
            assert m.t1_bar >= floor[0] - 1e-9 and m.t2_bar >= floor[1] - 1e-9
            assert m.r12 <= 0.5 + 1e-12 and m.r21 <= 0.5 + 1e-12
            assert 0 <= m.f_sys <= 1
            assert m.r_sum == m.r12 + m.r21


def test_little_uses_own_queue():
    m = evaluate(LinkConfig(0.25, 1, 10), Thresholds(2, 1), (5, 5), DE).metrics
    assert m.t2_bar == pytest.approx(m.q2_bar / m.r21)
    assert m.t1_bar == pytest.approx(m.q1_bar / m.r12)


@pytest.mark.parametrize("c", [LinkConfig(1, 1, 10), LinkConfig(0.25, 1, db_to_linear(15)),
                               LinkConfig(2, 0.5, 3)])
@pytest.mark.parametrize("caps", [(10, 10), (3, 3), (6, 4)])
def test_occupancy_recursion_matches_pipeline(c, caps):
    p = region_probs_exact(c)
    occ = prop3_occupancy(p, caps)
    tm = reduce(build_te_min(p, caps))
    dist = stationary(tm)
    assert occ.space.states == dist.space.states
    assert np.abs(occ.pi - dist.pi).max() < 1e-9


def test_occupancy_near_perfect_links():
    p = region_probs_exact(LinkConfig(1, 1, 1e6))
    occ = prop3_occupancy(p, (10, 10))
    interior = [s for s in occ.space.states if s not in {(10, 0), (0, 10), (0, 0), (1, 1)}]
    for s in interior:
        assert occ[s] == pytest.approx(1 / 38, rel=1e-3)


def test_occupancy_errors():
    with pytest.raises(ValueError):
        prop3_occupancy(region_probs_exact(C), (2, 5))
    with pytest.raises(NumericalBreakdown):
        prop3_occupancy(ALL_R1, (5, 5))
