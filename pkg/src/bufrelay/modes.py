"""Transmission modes, queue regions and the feasible mode set.

Buffer B1 holds packets from user 1 waiting for the relay->user 2 link,
B2 holds packets from user 2 waiting for the relay->user 1 link.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

from .channel import SnrRegion


class Mode(NamedTuple):
    k: int
    delta_l1: int
    delta_l2: int
    tau: int


MODES = {
    1: Mode(1, +1, 0, 1),  # user 1 -> relay
    2: Mode(2, 0, +1, 1),  # user 2 -> relay
    3: Mode(3, +1, +1, 2),  # multiple access
    4: Mode(4, 0, -1, 1),  # relay -> user 1, drains B2
    5: Mode(5, -1, 0, 1),  # relay -> user 2, drains B1
    6: Mode(6, -1, -1, 2),  # broadcast
    7: Mode(7, 0, 0, 0),  # silent
}
ALL_MODES = frozenset(MODES)


@dataclass(frozen=True)
class QueueState:
    l1: int
    l2: int
    l1_max: int
    l2_max: int

    def __post_init__(self):
        if self.l1_max < 1 or self.l2_max < 1:
            raise ValueError("buffer capacities must be at least 1")
        if not (0 <= self.l1 <= self.l1_max and 0 <= self.l2 <= self.l2_max):
            raise ValueError(f"queue lengths {(self.l1, self.l2)} outside capacity "
                             f"{(self.l1_max, self.l2_max)}")

    @property
    def caps(self) -> tuple[int, int]:
        return self.l1_max, self.l2_max

    def apply(self, k: int) -> "QueueState":
        m = MODES[k]
        return QueueState(self.l1 + m.delta_l1, self.l2 + m.delta_l2, self.l1_max, self.l2_max)


class QueueRegion(IntEnum):
    L1 = 1
    L2 = 2
    L3 = 3
    L4 = 4
    L5 = 5
    L6 = 6
    L7 = 7
    L8 = 8
    L9 = 9


_SNR_CANDIDATES = {
    SnrRegion.R1: ALL_MODES,
    SnrRegion.R2: frozenset({1, 2, 4, 5, 6, 7}),
    SnrRegion.R3: frozenset({1, 4, 7}),
    SnrRegion.R4: frozenset({2, 5, 7}),
    SnrRegion.R5: frozenset({7}),
}

_QUEUE_CANDIDATES = {
    QueueRegion.L1: ALL_MODES,
    QueueRegion.L2: frozenset({1, 2, 3, 7}),
    QueueRegion.L3: frozenset({1, 2, 3, 5, 7}),
    QueueRegion.L4: frozenset({2, 5, 7}),
    QueueRegion.L5: frozenset({2, 4, 5, 6, 7}),
    QueueRegion.L6: frozenset({4, 5, 6, 7}),
    QueueRegion.L7: frozenset({1, 4, 5, 6, 7}),
    QueueRegion.L8: frozenset({1, 4, 7}),
    QueueRegion.L9: frozenset({1, 2, 3, 4, 7}),
}

# (B1 status, B2 status) -> region; status is 'e'mpty, 'p'artial or 'f'ull
_QUEUE_REGION = {
    ("p", "p"): QueueRegion.L1,
    ("e", "e"): QueueRegion.L2,
    ("p", "e"): QueueRegion.L3,
    ("f", "e"): QueueRegion.L4,
    ("f", "p"): QueueRegion.L5,
    ("f", "f"): QueueRegion.L6,
    ("p", "f"): QueueRegion.L7,
    ("e", "f"): QueueRegion.L8,
    ("e", "p"): QueueRegion.L9,
}


def _status(length: int, cap: int) -> str:
    if length == 0:
        return "e"
    return "f" if length == cap else "p"


def candidate_modes_snr(r: SnrRegion) -> frozenset[int]:
    return _SNR_CANDIDATES[SnrRegion(r)]


def classify_queue_region(q: QueueState) -> QueueRegion:
    return _QUEUE_REGION[_status(q.l1, q.l1_max), _status(q.l2, q.l2_max)]


def candidate_modes_queue(n: QueueRegion) -> frozenset[int]:
    return _QUEUE_CANDIDATES[QueueRegion(n)]


def feasible_set(r: SnrRegion, q: QueueState) -> frozenset[int]:
    return candidate_modes_snr(r) & candidate_modes_queue(classify_queue_region(q))
