import itertools

import numpy as np
import pytest
from scipy import stats

from bufrelay.channel import REGIONS, SnrRegion
from bufrelay.modes import MODES, QueueState, feasible_set
from bufrelay.policy import (PolicyKind, Thresholds, select_mode, selection_distribution, tie_set,
                             utilities)

T55 = Thresholds(5, 5)
DE, TE = PolicyKind.DELAY_EFFICIENT, PolicyKind.THROUGHPUT_EFFICIENT


def q(l1, l2, cap=10):
    return QueueState(l1, l2, cap, cap)


@pytest.mark.parametrize("state, want", [
    ((0, 3), (5, 2, 2, 0, 0, 0, 0)),
    ((5, 5), (0,) * 7),
    ((6, 5), (-1, 0, -1, 0, 1, 1, 0)),
])
def test_utilities(state, want):
    assert utilities(q(*state), T55) == want


@pytest.mark.parametrize("r, state, kind, want", [
    (SnrRegion.R2, (0, 3), DE, 1),
    (SnrRegion.R1, (6, 5), DE, 6),
    (SnrRegion.R1, (6, 5), TE, 6),
    (SnrRegion.R5, (4, 2), DE, 7),
    (SnrRegion.R5, (4, 2), TE, 7),
])
def test_select_examples(r, state, kind, want):
    out = select_mode(r, q(*state), T55, kind, np.random.default_rng(0))
    assert out.chosen == want
    assert out.tie_set == (want,)


def _brute_tie_set(r, qs, t, kind):
    lam = utilities(qs, t)
    keys = {DE: lambda k: (lam[k - 1], MODES[k].tau), TE: lambda k: (MODES[k].tau, lam[k - 1])}[kind]
    feas = feasible_set(r, qs)
    best = max(keys(k) for k in feas)
    return tuple(sorted(k for k in feas if keys(k) == best))


@pytest.mark.parametrize("kind", [DE, TE])
def test_tie_set_is_lexicographic_argmax(kind):
    for l1, l2, t1, t2 in itertools.product(range(4), range(4), range(4), range(4)):
        qs, t = q(l1, l2, 3), Thresholds(t1, t2)
        for r in REGIONS:
            assert tie_set(r, qs, t, kind) == _brute_tie_set(r, qs, t, kind)


def test_distribution_tie_at_origin():
    d = selection_distribution(SnrRegion.R2, q(0, 0), Thresholds(0, 0), DE)
    assert d == {1: 0.5, 2: 0.5}
    assert selection_distribution(SnrRegion.R5, q(3, 3), T55, TE) == {7: 1.0}


def test_sampled_selections_match_distribution():
    rng = np.random.default_rng(11)
    r, qs, t = SnrRegion.R2, q(0, 0), Thresholds(0, 0)
    dist = selection_distribution(r, qs, t, DE)
    draws = [select_mode(r, qs, t, DE, rng).chosen for _ in range(10_000)]
    modes = sorted(dist)
    assert set(draws) == set(modes)
    counts = [draws.count(k) for k in modes]
    assert stats.chisquare(counts, [dist[k] * len(draws) for k in modes]).pvalue > 0.001


def test_selected_mode_is_feasible():
    rng = np.random.default_rng(2)
    for _ in range(2000):
        qs = q(int(rng.integers(0, 11)), int(rng.integers(0, 11)))
        r = SnrRegion(int(rng.integers(1, 6)))
        t = Thresholds(int(rng.integers(0, 11)), int(rng.integers(0, 11)))
        kind = DE if rng.random() < 0.5 else TE
        out = select_mode(r, qs, t, kind, rng)
        assert out.chosen in feasible_set(r, qs)
        assert set(out.utilities) == set(feasible_set(r, qs))


def test_threshold_validation():
    with pytest.raises(ValueError):
        Thresholds(-1, 0)
    with pytest.raises(ValueError):
        Thresholds(4, 0).check_caps((3, 3))
