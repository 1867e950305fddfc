"""Block Rayleigh fading links and the five instantaneous SNR regions.

Region membership (linear SNRs, ``thr = 2**r0 - 1``, ``thr_sum = 2**(2*r0) - 1``):

    R1  g1 >= thr, g2 >= thr, g1 + g2 >= thr_sum   (every mode decodable)
    R2  g1 >= thr, g2 >= thr, g1 + g2 <  thr_sum   (all but multiple access)
    R3  g1 >= thr, g2 <  thr                        (only link 1 usable)
    R4  g1 <  thr, g2 >= thr                        (only link 2 usable)
    R5  g1 <  thr, g2 <  thr                        (silence)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class SnrRegion(IntEnum):
    R1 = 1
    R2 = 2
    R3 = 3
    R4 = 4
    R5 = 5


REGIONS = tuple(SnrRegion)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class LinkConfig:
    """Mean fading gains, transmit SNR (linear) and fixed rate of both links."""

    omega1: float
    omega2: float
    gamma: float
    r0: float = 1.0

    def __post_init__(self):
        for name in ("omega1", "omega2", "gamma", "r0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    @property
    def gamma_thr(self) -> float:
        return 2.0**self.r0 - 1.0

    @property
    def gamma_thr_sum(self) -> float:
        return 2.0 ** (2.0 * self.r0) - 1.0

    @property
    def mean_snr1(self) -> float:
        return self.omega1 * self.gamma

    @property
    def mean_snr2(self) -> float:
        return self.omega2 * self.gamma

    def with_gamma(self, gamma: float) -> "LinkConfig":
        return LinkConfig(self.omega1, self.omega2, gamma, self.r0)


@dataclass(frozen=True)
class SnrPair:
    g1: float
    g2: float

    def __post_init__(self):
        if not (math.isfinite(self.g1) and math.isfinite(self.g2)):
            raise ValueError("SNRs must be finite")
        if self.g1 < 0 or self.g2 < 0:
            raise ValueError("SNRs must be non-negative")


@dataclass(frozen=True)
class RegionProbs:
    """Probabilities of the five SNR regions, ``p[0]`` is R1."""

    p: tuple[float, float, float, float, float]

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if len(p) != 5:
            raise ValueError("need exactly five region probabilities")
        if any(not (0.0 <= x <= 1.0) for x in p):
            raise ValueError(f"region probabilities must lie in [0, 1]: {p}")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise ValueError(f"region probabilities must sum to 1: {p}")
        object.__setattr__(self, "p", p)

    def __getitem__(self, region: SnrRegion) -> float:
        return self.p[int(region) - 1]

    def __iter__(self):
        return iter(self.p)

    @property
    def p1(self) -> float:
        return self.p[0]

    @property
    def p2(self) -> float:
        return self.p[1]

    @property
    def p3(self) -> float:
        return self.p[2]

    @property
    def p4(self) -> float:
        return self.p[3]

    @property
    def p5(self) -> float:
        return self.p[4]

    def swapped(self) -> "RegionProbs":
        """Probabilities seen with the roles of user 1 and user 2 exchanged."""
        return RegionProbs((self.p1, self.p2, self.p4, self.p3, self.p5))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "RegionProbs":
        w = rng.dirichlet(np.ones(5))
        w[4] = max(0.0, 1.0 - math.fsum(w[:4]))
        return cls(tuple(w))


def classify_region(s: SnrPair, c: LinkConfig) -> SnrRegion:
    thr = c.gamma_thr
    ok1 = s.g1 >= thr
    ok2 = s.g2 >= thr
    if ok1 and ok2:
        return SnrRegion.R1 if s.g1 + s.g2 >= c.gamma_thr_sum else SnrRegion.R2
    if ok1:
        return SnrRegion.R3
    if ok2:
        return SnrRegion.R4
    return SnrRegion.R5


def classify_regions(g1: np.ndarray, g2: np.ndarray, c: LinkConfig) -> np.ndarray:
    """Vectorised :func:`classify_region`; returns region numbers 1..5 as int8."""
    thr = c.gamma_thr
    ok1 = g1 >= thr
    ok2 = g2 >= thr
    both = ok1 & ok2
    out = np.full(np.shape(g1), 5, dtype=np.int8)
    out[ok1 & ~ok2] = 3
    out[~ok1 & ok2] = 4
    out[both] = np.where((g1 + g2)[both] >= c.gamma_thr_sum, 1, 2)
    return out


def sample_snr(c: LinkConfig, rng: np.random.Generator) -> SnrPair:
    g1, g2 = rng.standard_exponential(2) * (c.mean_snr1, c.mean_snr2)
    return SnrPair(float(g1), float(g2))


def sample_snr_batch(c: LinkConfig, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` independent SNR pairs.

    Consumes the stream exactly like ``n`` successive calls to :func:`sample_snr`.
    """
    e = rng.standard_exponential((n, 2))
    return e[:, 0] * c.mean_snr1, e[:, 1] * c.mean_snr2


def _phi(u: float) -> float:
    # (1 - exp(-u)) / u, continuous at u = 0
    if abs(u) < 1e-12:
        return 1.0 - u / 2.0
    return -math.expm1(-u) / u


def region_probs_exact(c: LinkConfig) -> RegionProbs:
    """Closed-form region probabilities under independent Rayleigh fading.

    R2 is the triangle {g1 >= thr, g2 >= thr, g1 + g2 < thr_sum}; integrating the
    joint exponential density over it gives

        P2 = e^{-thr/a - thr/b} (1 - e^{-w/a})
             - (1/a) e^{-thr_sum/b} e^{-k thr} w phi(k w)

    with a, b the mean SNRs, w = thr_sum - 2 thr, k = 1/a - 1/b and
    phi(u) = (1 - e^{-u}) / u.
    """
    a, b = c.mean_snr1, c.mean_snr2
    thr, thr_sum = c.gamma_thr, c.gamma_thr_sum
    good1 = math.exp(-thr / a)
    good2 = math.exp(-thr / b)
    bad1 = -math.expm1(-thr / a)
    bad2 = -math.expm1(-thr / b)

    w = thr_sum - 2.0 * thr
    k = 1.0 / a - 1.0 / b
    first = math.exp(-thr / a - thr / b) * -math.expm1(-w / a)
    second = math.exp(-thr_sum / b - k * thr) * (w / a) * _phi(k * w)
    p2 = min(max(first - second, 0.0), good1 * good2)

    p3 = good1 * bad2
    p4 = bad1 * good2
    p5 = bad1 * bad2
    p1 = good1 * good2 - p2
    # absorb the last ulp of rounding into the dominant entry
    p = [p1, p2, p3, p4, p5]
    i = int(np.argmax(p))
    p[i] = max(0.0, 1.0 - math.fsum(p[:i] + p[i + 1:]))
    return RegionProbs(tuple(p))


def region_probs_monte_carlo(c: LinkConfig, n: int, rng: np.random.Generator) -> RegionProbs:
    if n < 1:
        raise ValueError("n must be at least 1")
    g1, g2 = sample_snr_batch(c, n, rng)
    counts = np.bincount(classify_regions(g1, g2, c), minlength=6)[1:]
    return RegionProbs(tuple(counts / n))
