"""Delay-aware two-stage mode selection with uniform tie-breaking."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .channel import SnrRegion
from .modes import MODES, QueueState, feasible_set


@dataclass(frozen=True)
class Thresholds:
    l1_thr: int
    l2_thr: int

    def __post_init__(self):
        if self.l1_thr < 0 or self.l2_thr < 0:
            raise ValueError("queue thresholds must be non-negative")

    def check_caps(self, caps: tuple[int, int]) -> None:
        if self.l1_thr > caps[0] or self.l2_thr > caps[1]:
            raise ValueError(f"thresholds {(self.l1_thr, self.l2_thr)} exceed buffer caps {caps}")


class PolicyKind(Enum):
    DELAY_EFFICIENT = "delay"
    THROUGHPUT_EFFICIENT = "throughput"


@dataclass(frozen=True)
class SelectionOutcome:
    chosen: int
    tie_set: tuple[int, ...]
    utilities: dict[int, int]


def utilities(q_prev: QueueState, t: Thresholds) -> tuple[int, ...]:
    """Utility of modes 1..7 given the previous slot's queue lengths."""
    lam1 = t.l1_thr - q_prev.l1
    lam2 = t.l2_thr - q_prev.l2
    lam4 = max(q_prev.l2 - t.l2_thr, 0)
    lam5 = max(q_prev.l1 - t.l1_thr, 0)
    return (lam1, lam2, min(lam1, lam2), lam4, lam5, max(lam4, lam5), 0)


def _argmax(modes, score) -> tuple[int, ...]:
    best = max(score(k) for k in modes)
    return tuple(sorted(k for k in modes if score(k) == best))


@lru_cache(maxsize=None)
def _tie_set(r: SnrRegion, l1: int, l2: int, l1_max: int, l2_max: int,
             t1: int, t2: int, kind: PolicyKind) -> tuple[int, ...]:
    q = QueueState(l1, l2, l1_max, l2_max)
    feasible = feasible_set(r, q)
    lam = utilities(q, Thresholds(t1, t2))

    def by_lambda(k):
        return lam[k - 1]

    def by_tau(k):
        return MODES[k].tau

    if kind is PolicyKind.DELAY_EFFICIENT:
        return _argmax(_argmax(feasible, by_lambda), by_tau)
    return _argmax(_argmax(feasible, by_tau), by_lambda)


def tie_set(r: SnrRegion, q_prev: QueueState, t: Thresholds, kind: PolicyKind) -> tuple[int, ...]:
    """Final candidate set before the die roll, sorted by mode index."""
    return _tie_set(SnrRegion(r), q_prev.l1, q_prev.l2, q_prev.l1_max, q_prev.l2_max,
                    t.l1_thr, t.l2_thr, kind)


def select_mode(r: SnrRegion, q_prev: QueueState, t: Thresholds, kind: PolicyKind,
                rng: np.random.Generator) -> SelectionOutcome:
    ties = tie_set(r, q_prev, t, kind)
    chosen = ties[0] if len(ties) == 1 else ties[int(rng.integers(len(ties)))]
    lam = utilities(q_prev, t)
    return SelectionOutcome(chosen, ties, {k: lam[k - 1] for k in feasible_set(r, q_prev)})


def selection_distribution(r: SnrRegion, q_prev: QueueState, t: Thresholds,
                           kind: PolicyKind) -> dict[int, float]:
    ties = tie_set(r, q_prev, t, kind)
    return {k: 1.0 / len(ties) for k in ties}
