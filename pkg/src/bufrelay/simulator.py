"""Slot-level Monte Carlo simulation of the relay protocol and two MABC baselines.

Packets are tokens carrying their arrival slot.  A packet stored at the end of
slot ``i`` and forwarded at the end of slot ``j`` waits ``j - i`` slots.

Random streams: ``SeedSequence(seed).spawn(2)`` gives the fading stream
(first child) and the tie-break stream (second child).  Both are drawn in
bulk up front, so a run is a pure function of its config.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import REGIONS, LinkConfig, classify_regions, sample_snr_batch
from .markov import Metrics
from .modes import MODES, QueueState
from .policy import PolicyKind, Thresholds, tie_set


@dataclass(frozen=True)
class SimConfig:
    link: LinkConfig
    thresholds: Thresholds = Thresholds(0, 0)
    caps: tuple[int, int] = (10, 10)
    kind: PolicyKind = PolicyKind.DELAY_EFFICIENT
    n_slots: int = 1_000_000
    seed: int = 0
    warmup_slots: int = 1000

    def __post_init__(self):
        if self.n_slots < 1:
            raise ValueError("n_slots must be positive")
        if self.warmup_slots < 0:
            raise ValueError("warmup_slots must be non-negative")
        if self.n_slots <= self.warmup_slots:
            raise ValueError("n_slots must exceed warmup_slots")
        self.thresholds.check_caps(self.caps)
        QueueState(0, 0, *self.caps)  # validates caps


@dataclass
class SimResult:
    metrics: Metrics
    delay_hist1: np.ndarray  # delay_hist1[d] = packets of flow 1 that waited d slots
    delay_hist2: np.ndarray
    mode_freq: dict[int, float]
    state_visits: np.ndarray  # end-of-slot visit counts, indexed [l1, l2]
    n_slots: int
    measured_slots: int
    packets_in: tuple[int, int]
    packets_out: tuple[int, int]
    final_lengths: tuple[int, int]
    extra: dict = field(default_factory=dict)

    @property
    def little_delays(self) -> tuple[float, float]:
        """Mean queue length over measured packet throughput, per flow."""
        m = self.metrics
        r0 = self.extra.get("r0", 1.0)
        return (m.q1_bar / (m.r12 / r0) if m.r12 > 0 else math.nan,
                m.q2_bar / (m.r21 / r0) if m.r21 > 0 else math.nan)


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    fading, ties = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(fading), np.random.default_rng(ties)


def _regions(link: LinkConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    g1, g2 = sample_snr_batch(link, n, rng)
    return classify_regions(g1, g2, link)


def _tie_table(cfg: SimConfig) -> list[list[list[tuple[int, ...]]]]:
    l1_max, l2_max = cfg.caps
    table = []
    for l1 in range(l1_max + 1):
        row = []
        for l2 in range(l2_max + 1):
            q = QueueState(l1, l2, l1_max, l2_max)
            row.append([None] + [tie_set(r, q, cfg.thresholds, cfg.kind) for r in REGIONS])
        table.append(row)
    return table


def _hist(delays: list[int]) -> np.ndarray:
    return np.bincount(np.asarray(delays, dtype=np.int64), minlength=1)


def _mean(delays: list[int]) -> float:
    return float(np.mean(delays)) if delays else math.nan


def run(cfg: SimConfig) -> SimResult:
    fading, tie_rng = _streams(cfg.seed)
    n = cfg.n_slots
    regions = _regions(cfg.link, n, fading).tolist()
    u = tie_rng.random(n).tolist()
    table = _tie_table(cfg)
    deltas = {k: (m.delta_l1, m.delta_l2) for k, m in MODES.items()}

    b1, b2 = deque(), deque()
    l1 = l2 = 0
    in1 = in2 = out1 = out2 = 0
    d1, d2 = [], []
    mode_counts = [0] * 8
    visits = np.zeros((cfg.caps[0] + 1, cfg.caps[1] + 1), dtype=np.int64)
    visit_list = []
    w = cfg.warmup_slots

    for i in range(n):
        ties = table[l1][l2][regions[i]]
        k = ties[0] if len(ties) == 1 else ties[int(u[i] * len(ties))]
        dl1, dl2 = deltas[k]
        measuring = i >= w
        if dl1 == 1:
            b1.append(i)
            in1 += 1
        elif dl1 == -1:
            t0 = b1.popleft()
            out1 += 1
            if measuring:
                d1.append(i - t0)
        if dl2 == 1:
            b2.append(i)
            in2 += 1
        elif dl2 == -1:
            t0 = b2.popleft()
            out2 += 1
            if measuring:
                d2.append(i - t0)
        l1 += dl1
        l2 += dl2
        if measuring:
            mode_counts[k] += 1
            visit_list.append(l1 * (cfg.caps[1] + 1) + l2)

    m_slots = n - w
    flat = np.bincount(np.asarray(visit_list, dtype=np.int64), minlength=visits.size)
    visits = flat.reshape(visits.shape)
    l1_grid, l2_grid = np.indices(visits.shape)
    q1 = float((visits * l1_grid).sum()) / m_slots
    q2 = float((visits * l2_grid).sum()) / m_slots
    r0 = cfg.link.r0
    r12 = len(d1) / m_slots * r0
    r21 = len(d2) / m_slots * r0
    half = r0 / 2
    metrics = Metrics(r12, r21, 1 - r12 / half, 1 - r21 / half, q1, q2, _mean(d1), _mean(d2))
    return SimResult(
        metrics=metrics,
        delay_hist1=_hist(d1),
        delay_hist2=_hist(d2),
        mode_freq={k: mode_counts[k] / m_slots for k in MODES},
        state_visits=visits,
        n_slots=n,
        measured_slots=m_slots,
        packets_in=(in1, in2),
        packets_out=(out1, out2),
        final_lengths=(l1, l2),
        extra={"r0": r0},
    )


class BaselineKind(Enum):
    MABC_CONVENTIONAL = "mabc"
    MABC_BUFFERED = "mabc-buffered"


def _conventional(cfg: SimConfig, regions: np.ndarray) -> SimResult:
    # slot 2j: multiple access, slot 2j+1: broadcast of what was just received
    n = cfg.n_slots
    r0 = cfg.link.r0
    ma = regions[0:n - 1:2] == 1
    bc = np.isin(regions[1::2], (1, 2))[: len(ma)]
    ok = ma & bc
    n_ma = int(ma.sum())
    delivered = int(ok.sum())
    # a pair received in an MA slot waits one broadcast slot, lost pairs never queue
    q_bar = n_ma / n
    r_flow = delivered / n * r0
    delays = [1] * delivered
    mode_freq = {k: 0.0 for k in MODES}
    mode_freq[3] = n_ma / n
    mode_freq[6] = delivered / n
    mode_freq[7] = 1.0 - mode_freq[3] - mode_freq[6]
    half = r0 / 2
    metrics = Metrics(r_flow, r_flow, 1 - r_flow / half, 1 - r_flow / half,
                      q_bar, q_bar, _mean(delays), _mean(delays))
    return SimResult(metrics, _hist(delays), _hist(delays), mode_freq,
                     np.zeros((0, 0), dtype=np.int64), n, n,
                     (n_ma, n_ma), (delivered, delivered), (0, 0), {"r0": r0})


def _buffered(cfg: SimConfig, regions: np.ndarray) -> SimResult:
    n = cfg.n_slots
    if n % 2:
        raise ValueError("buffered MABC needs an even number of slots")
    r0 = cfg.link.r0
    h = n // 2
    arrivals = np.flatnonzero(regions[:h] == 1)
    sends = h + np.flatnonzero(np.isin(regions[h:], (1, 2)))
    delivered = min(len(arrivals), len(sends))
    # FIFO: the j-th stored pair leaves on the j-th usable broadcast slot
    delays = (sends[:delivered] - arrivals[:delivered]).tolist()
    queue = np.zeros(n, dtype=np.int64)
    np.add.at(queue, arrivals, 1)
    np.add.at(queue, sends[:delivered], -1)
    q_bar = float(np.cumsum(queue).sum()) / n
    r_flow = delivered / n * r0
    mode_freq = {k: 0.0 for k in MODES}
    mode_freq[3] = len(arrivals) / n
    mode_freq[6] = delivered / n
    mode_freq[7] = 1.0 - mode_freq[3] - mode_freq[6]
    half = r0 / 2
    metrics = Metrics(r_flow, r_flow, 1 - r_flow / half, 1 - r_flow / half,
                      q_bar, q_bar, _mean(delays), _mean(delays))
    left = len(arrivals) - delivered
    return SimResult(metrics, _hist(delays), _hist(delays), mode_freq,
                     np.zeros((0, 0), dtype=np.int64), n, n,
                     (len(arrivals),) * 2, (delivered,) * 2, (left, left), {"r0": r0})


def run_baseline(kind: BaselineKind, cfg: SimConfig) -> SimResult:
    """MABC reference protocols over the full horizon (warmup is ignored).

    Uses the same fading stream as :func:`run` with the same seed, so both see
    identical channel realisations.
    """
    fading, _ = _streams(cfg.seed)
    regions = _regions(cfg.link, cfg.n_slots, fading)
    if kind is BaselineKind.MABC_CONVENTIONAL:
        return _conventional(cfg, regions)
    return _buffered(cfg, regions)
