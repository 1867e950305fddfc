"""High-SNR expansions of the region probabilities and of both policies' metrics.

Outage values are stored as coefficients of ``1/gamma`` (linear transmit SNR).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .channel import LinkConfig


@dataclass(frozen=True)
class AsymptoticRegionProbs:
    """Leading-order region probabilities; they need not sum to one."""

    p1: float
    p2: float
    p3: float
    p4: float
    p5: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return self.p1, self.p2, self.p3, self.p4, self.p5


@dataclass(frozen=True)
class AsymptoticMetrics:
    f_sys_coef: float
    f12_coef: float
    f21_coef: float
    r_sum: float
    t1_bar: float
    t2_bar: float
    gap_db: float

    def f_sys(self, gamma: float) -> float:
        return self.f_sys_coef / gamma

    def f12(self, gamma: float) -> float:
        return self.f12_coef / gamma

    def f21(self, gamma: float) -> float:
        return self.f21_coef / gamma

    @property
    def t_sys(self) -> float:
        return 0.5 * (self.t1_bar + self.t2_bar)


def region_probs_asymptotic(c: LinkConfig) -> AsymptoticRegionProbs:
    w1, w2, g = c.omega1, c.omega2, c.gamma
    thr, thr_sum = c.gamma_thr, c.gamma_thr_sum
    p2 = (2 * thr**2 + thr_sum**2 / 2 - 2 * thr * thr_sum) / (w1 * w2 * g**2)
    return AsymptoticRegionProbs(
        p1=1.0 - (w1 + w2) * thr / (w1 * w2 * g),
        p2=p2,
        p3=thr / (w2 * g),
        p4=thr / (w1 * g),
        p5=thr**2 / (w1 * w2 * g**2),
    )


def snr_gap(c: LinkConfig) -> float:
    """dB shift between the minimum-delay outage and the unconstrained one."""
    lo, hi = sorted((c.omega1, c.omega2))
    return 10.0 * math.log10(1.0 + lo / hi)


def unconstrained_outage_coef(c: LinkConfig) -> float:
    """Outage coefficient when only the weaker link limits the flows.

    Reduces to ``thr / omega`` on a symmetric channel; the minimum-delay curve
    sits :func:`snr_gap` dB to its right.
    """
    return c.gamma_thr / min(c.omega1, c.omega2)


def high_snr_delay_efficient(c: LinkConfig) -> AsymptoticMetrics:
    w1, w2, thr = c.omega1, c.omega2, c.gamma_thr
    return AsymptoticMetrics(
        f_sys_coef=(w1 + w2) * thr / (w1 * w2),
        f12_coef=(w1 + 3 * w2) * thr / (2 * w1 * w2),
        f21_coef=(3 * w1 + w2) * thr / (2 * w1 * w2),
        r_sum=c.r0,
        t1_bar=1.0,
        t2_bar=1.0,
        gap_db=snr_gap(c),
    )


def te_min_delays(caps: tuple[int, int]) -> tuple[float, float]:
    """Limiting delays of the throughput-first policy with zero thresholds."""
    a, b = caps
    if a < 1 or b < 1:
        raise ValueError("buffer capacities must be at least 1")
    den = a + b - 1
    return (a * a + b - 1) / den, (b * b + a - 1) / den


def high_snr_throughput_efficient(c: LinkConfig, caps: tuple[int, int]) -> AsymptoticMetrics:
    if not math.isclose(c.omega1, c.omega2, rel_tol=1e-12):
        raise ValueError("throughput-efficient asymptotics are only available for equal link gains")
    coef = c.gamma_thr / c.omega1
    t1, t2 = te_min_delays(caps)
    return AsymptoticMetrics(
        f_sys_coef=coef, f12_coef=coef, f21_coef=coef,
        r_sum=c.r0, t1_bar=t1, t2_bar=t2, gap_db=snr_gap(c),
    )
