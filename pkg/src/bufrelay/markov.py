"""Queue-state Markov chain: builders, reduction, stationary solve and metrics.

Matrices are column-stochastic: ``M[n, m]`` is the probability of moving from
state ``space[m]`` to state ``space[n]`` in one slot.  States are enumerated
with l2 as the slow index: (0,0), (1,0), ..., (l1_max,0), (0,1), ...
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .channel import REGIONS, LinkConfig, RegionProbs, region_probs_exact
from .modes import MODES, QueueState
from .policy import PolicyKind, Thresholds, selection_distribution


class ChainError(ArithmeticError):
    """Stationary solve failed: reducible chain or residual above tolerance."""


class NumericalBreakdown(ArithmeticError):
    """A closed-form recursion hit a vanishing denominator."""


@dataclass(frozen=True)
class StateSpace:
    states: tuple[tuple[int, int], ...]
    caps: tuple[int, int]
    reduced: bool = False
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {s: i for i, s in enumerate(self.states)})

    @classmethod
    def full(cls, caps: tuple[int, int]) -> "StateSpace":
        l1_max, l2_max = caps
        states = tuple((l1, l2) for l2 in range(l2_max + 1) for l1 in range(l1_max + 1))
        return cls(states, (l1_max, l2_max))

    def __len__(self):
        return len(self.states)

    def __contains__(self, s):
        return s in self.index


@dataclass(frozen=True)
class TransitionMatrix:
    space: StateSpace
    m: np.ndarray

    def prob(self, src: tuple[int, int], dst: tuple[int, int]) -> float:
        idx = self.space.index
        if src not in idx or dst not in idx:
            return 0.0
        return float(self.m[idx[dst], idx[src]])


@dataclass(frozen=True)
class StationaryDist:
    space: StateSpace
    pi: np.ndarray

    def __getitem__(self, s: tuple[int, int]) -> float:
        i = self.space.index.get(s)
        return 0.0 if i is None else float(self.pi[i])

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {s: float(p) for s, p in zip(self.space.states, self.pi)}


@dataclass(frozen=True)
class Metrics:
    r12: float
    r21: float
    f12: float
    f21: float
    q1_bar: float
    q2_bar: float
    t1_bar: float
    t2_bar: float

    @property
    def r_sum(self) -> float:
        return self.r12 + self.r21

    @property
    def f_sys(self) -> float:
        return 0.5 * (self.f12 + self.f21)

    @property
    def t_sys(self) -> float:
        return 0.5 * (self.t1_bar + self.t2_bar)

    def as_dict(self) -> dict[str, float]:
        return {
            "r12": self.r12, "r21": self.r21, "r_sum": self.r_sum,
            "f12": self.f12, "f21": self.f21, "f_sys": self.f_sys,
            "q1_bar": self.q1_bar, "q2_bar": self.q2_bar,
            "t1_bar": self.t1_bar, "t2_bar": self.t2_bar, "t_sys": self.t_sys,
        }

    @classmethod
    def from_rates(cls, r12, r21, q1, q2, r0) -> "Metrics":
        """Outages relative to R0/2 per flow; delays by Little's law, in slots."""
        half = r0 / 2.0
        t1 = q1 / (r12 / r0) if r12 > 0 else math.nan
        t2 = q2 / (r21 / r0) if r21 > 0 else math.nan
        return cls(r12, r21, 1.0 - r12 / half, 1.0 - r21 / half, q1, q2, t1, t2)


def _check_caps(caps):
    l1_max, l2_max = caps
    if l1_max < 1 or l2_max < 1:
        raise ValueError("buffer capacities must be at least 1")
    return int(l1_max), int(l2_max)


def build_generic(probs: RegionProbs, t: Thresholds, caps: tuple[int, int],
                  kind: PolicyKind) -> TransitionMatrix:
    """Transition matrix of any policy, by conditioning on the SNR region."""
    caps = _check_caps(caps)
    t.check_caps(caps)
    space = StateSpace.full(caps)
    m = np.zeros((len(space), len(space)))
    for col, (l1, l2) in enumerate(space.states):
        q = QueueState(l1, l2, *caps)
        for r in REGIONS:
            pr = probs[r]
            if pr == 0.0:
                continue
            for k, pk in selection_distribution(r, q, t, kind).items():
                mode = MODES[k]
                row = space.index[l1 + mode.delta_l1, l2 + mode.delta_l2]
                m[row, col] += pr * pk
    return TransitionMatrix(space, m)


# -- delay-efficient closed form ---------------------------------------------

def _m_up1(l1, l2, t1, t2, p1, p2, p3, p4, p5):
    """Probability of (l1, l2) -> (l1 + 1, l2) under the delay-efficient policy."""
    if l2 > t2 and l1 + l2 < t1 + t2:
        return p1 + p2 + p3
    if l2 <= t2 and l1 - l2 < t1 - t2:
        return p2 + p3
    if (l2 < t2 and l1 - l2 == t1 - t2) or (l1, l2) == (t1, t2) == (0, 0):
        return p2 / 2 + p3
    if l1 == 0 and l2 == t2 and t1 == 0:
        return (p2 + p3) / 2
    if (l1 < t1 and l1 - l2 > t1 - t2) or (l1, l2) == (t1, 0):
        return p3
    if ((l1 == t1 and 0 < l2 <= t2 and (l1, l2) != (0, t2))
            or (l2 > t2 and l1 + l2 == t1 + t2 and (l1, l2) != (0, t1 + t2))):
        return p3 / 2
    if (l1, l2) == (0, t1 + t2) and (t1 != 0 or t2 != 0):
        return (p1 + p2 + p3) / 2
    return 0.0


def _m_down2(l1, l2, t1, t2, p1, p2, p3, p4, p5):
    """Probability of (l1, l2) -> (l1, l2 - 1) under the delay-efficient policy."""
    if l1 == 0 and l2 > t1 + t2:
        return p1 + p2 + p3
    if l1 == 0 and l2 == t2 and t1 == 0:
        return (p2 + p3) / 2
    if (l1 > t1 or l1 + l2 > t1 + t2) and l2 != 0:
        return p3
    if ((l1 == t1 and 0 < l2 <= t2)
            or (l2 > t2 and l1 + l2 == t1 + t2 and (l1, l2) != (0, t1 + t2))):
        return p3 / 2
    if (l1, l2) == (0, t1 + t2) and (t1 != 0 or t2 != 0):
        return (p1 + p2 + p3) / 2
    return 0.0


def _m_stay(l1, l2, t1, t2, p1, p2, p3, p4, p5):
    if l1 > t1 and l2 == 0:
        return p5 + p3
    if l1 == 0 and l2 > t2:
        return p5 + p4
    return p5


def _m_up_both(l1, l2, t1, t2, p1, p2, p3, p4, p5):
    if l1 <= t1 and l2 <= t2 and ((l1, l2) != (t1, t2) or t1 == 0 or t2 == 0):
        return p1
    if l1 == t1 and l2 == t2 and t1 != 0 and t2 != 0:
        return p1 / 2
    return 0.0


def _m_down_both(l1, l2, t1, t2, p1, p2, p3, p4, p5):
    if l1 + l2 >= t1 + t2 and l1 != 0 and l2 != 0 and (l1, l2) != (t1, t2):
        return p1 + p2
    if l1 == t1 and l2 == t2 and t1 != 0 and t2 != 0:
        return p1 / 2 + p2
    return 0.0


def delay_efficient_transitions(l1: int, l2: int, t: Thresholds,
                                probs: RegionProbs) -> dict[tuple[int, int], float]:
    """Closed-form outgoing transition probabilities of state (l1, l2).

    Valid while neither buffer is full; user-2 quantities are obtained from the
    user-1 expressions by exchanging the users (swap l1/l2, thresholds, R3/R4).
    """
    t1, t2 = t.l1_thr, t.l2_thr
    p = tuple(probs)
    ps = tuple(probs.swapped())
    return {
        (l1, l2): _m_stay(l1, l2, t1, t2, *p),
        (l1 + 1, l2): _m_up1(l1, l2, t1, t2, *p),
        (l1, l2 + 1): _m_up1(l2, l1, t2, t1, *ps),
        (l1, l2 - 1): _m_down2(l1, l2, t1, t2, *p),
        (l1 - 1, l2): _m_down2(l2, l1, t2, t1, *ps),
        (l1 + 1, l2 + 1): _m_up_both(l1, l2, t1, t2, *p),
        (l1 - 1, l2 - 1): _m_down_both(l1, l2, t1, t2, *p),
    }


def build_prop1(probs: RegionProbs, t: Thresholds, caps: tuple[int, int]) -> TransitionMatrix:
    """Delay-efficient matrix from the closed-form expressions.

    Entries whose destination lies outside the buffer grid are dropped; the
    expressions do not model full buffers, so states with ``l_j == l_j_max`` are
    only exact when ``l_j_max > l_j_thr``.
    """
    caps = _check_caps(caps)
    t.check_caps(caps)
    space = StateSpace.full(caps)
    m = np.zeros((len(space), len(space)))
    for col, (l1, l2) in enumerate(space.states):
        for dst, pr in delay_efficient_transitions(l1, l2, t, probs).items():
            if pr != 0.0 and dst in space.index:
                m[space.index[dst], col] += pr
    return TransitionMatrix(space, m)


# -- throughput-efficient closed form at zero thresholds -----------------------

def _te_min_row(l1, l2, caps, probs):
    p1, p2, p3, p4, p5 = probs
    l1_max, l2_max = caps
    e1, f1 = l1 == 0, l1 == l1_max
    e2, f2 = l2 == 0, l2 == l2_max
    if e1 and e2:
        return {(0, 0): p5, (1, 0): p2 / 2 + p3, (0, 1): p2 / 2 + p4, (1, 1): p1}
    if not e1 and not e2:
        # both buffers non-empty: broadcast when possible, else drain the usable side
        return {(l1 - 1, l2 - 1): p1 + p2, (l1, l2 - 1): p3, (l1 - 1, l2): p4, (l1, l2): p5}
    if e2 and not f1:
        return {(l1 + 1, l2): p3, (l1 + 1, l2 + 1): p1, (l1 - 1, l2): p2 + p4, (l1, l2): p5}
    if e2:
        return {(l1 - 1, l2): p1 + p2 + p4, (l1, l2): p3 + p5}
    if f2:
        return {(l1, l2 - 1): p1 + p2 + p3, (l1, l2): p4 + p5}
    return {(l1, l2 + 1): p4, (l1 + 1, l2 + 1): p1, (l1, l2 - 1): p2 + p3, (l1, l2): p5}


def build_te_min(probs: RegionProbs, caps: tuple[int, int]) -> TransitionMatrix:
    """Throughput-efficient matrix at zero thresholds, per queue region."""
    caps = _check_caps(caps)
    space = StateSpace.full(caps)
    m = np.zeros((len(space), len(space)))
    for col, (l1, l2) in enumerate(space.states):
        for dst, pr in _te_min_row(l1, l2, caps, tuple(probs)).items():
            if pr != 0.0:
                m[space.index[dst], col] += pr
    return TransitionMatrix(space, m)


# -- reduction and stationary solve ----------------------------------------------

def _reachable(m: np.ndarray, start: int) -> list[int]:
    seen = {start}
    todo = deque([start])
    while todo:
        col = todo.popleft()
        for row in np.flatnonzero(m[:, col]):
            if row not in seen:
                seen.add(int(row))
                todo.append(int(row))
    return sorted(seen)


def reduce(tm: TransitionMatrix) -> TransitionMatrix:
    """Restrict the chain to the states reachable from (0, 0)."""
    keep = _reachable(tm.m, tm.space.index[0, 0])
    space = StateSpace(tuple(tm.space.states[i] for i in keep), tm.space.caps, reduced=True)
    return TransitionMatrix(space, tm.m[np.ix_(keep, keep)])


def _closed_classes(m: np.ndarray) -> int:
    """Number of closed communicating classes (recurrent classes)."""
    n = len(m)
    reach = [set(_reachable(m, i)) for i in range(n)]
    closed = set()
    for i in range(n):
        if all(i in reach[j] for j in reach[i]):
            closed.add(min(reach[i]))
    return len(closed)


def stationary(tm: TransitionMatrix, tol: float = 1e-9, max_iter: int = 200_000) -> StationaryDist:
    """Solve M pi = pi, sum(pi) = 1 by a direct solve with power-iteration fallback."""
    m = tm.m
    n = len(m)
    if n == 1:
        return StationaryDist(tm.space, np.ones(1))
    if _closed_classes(m) != 1:
        raise ChainError("chain has more than one recurrent class; stationary law is not unique")

    a = m - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        pi = np.full(n, 1.0 / n)
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)

    if not _is_stationary(m, pi, tol):
        pi = np.full(n, 1.0 / n)
        for _ in range(max_iter):
            nxt = m @ pi
            if np.max(np.abs(nxt - pi)) < tol * 1e-3:
                pi = nxt
                break
            pi = nxt
        pi = pi / pi.sum()
        if not _is_stationary(m, pi, tol):
            res = np.max(np.abs(m @ pi - pi))
            raise ChainError(f"stationary residual {res:.3e} above tolerance {tol:.1e}")
    pi = np.clip(pi, 0.0, None)
    return StationaryDist(tm.space, pi / pi.sum())


def _is_stationary(m, pi, tol):
    return (np.all(np.isfinite(pi)) and pi.min() > -1e-12
            and abs(pi.sum() - 1.0) < 1e-10
            and np.max(np.abs(m @ pi - pi)) < tol)


def residual(tm: TransitionMatrix, dist: StationaryDist) -> float:
    return float(np.max(np.abs(tm.m @ dist.pi - dist.pi)))


def metrics(dist: StationaryDist, tm: TransitionMatrix, c: LinkConfig) -> Metrics:
    """Throughputs, outages, mean queue lengths and Little's-law delays.

    A flow-1 packet leaves the relay exactly on the moves that lower l1; the
    delay is the mean queue length over the per-slot packet throughput.
    """
    space = tm.space
    r12 = r21 = q1 = q2 = 0.0
    for col, (l1, l2) in enumerate(space.states):
        p = dist[(l1, l2)]
        if p == 0.0:
            continue
        q1 += l1 * p
        q2 += l2 * p
        out1 = tm.prob((l1, l2), (l1 - 1, l2)) + tm.prob((l1, l2), (l1 - 1, l2 - 1))
        out2 = tm.prob((l1, l2), (l1, l2 - 1)) + tm.prob((l1, l2), (l1 - 1, l2 - 1))
        r12 += out1 * p
        r21 += out2 * p
    return Metrics.from_rates(r12 * c.r0, r21 * c.r0, q1, q2, c.r0)


# -- closed forms ---------------------------------------------------------------

def lemma1_min_delays(probs: RegionProbs) -> tuple[float, float]:
    """Smallest mean delays any causal mode-selection policy can reach."""
    d1 = probs.p1 + probs.p2 + probs.p4
    d2 = probs.p1 + probs.p2 + probs.p3
    return (1.0 / d1 if d1 > 0 else math.nan, 1.0 / d2 if d2 > 0 else math.nan)


def closed_form_min_delay(probs: RegionProbs, r0: float) -> Metrics:
    """Delay-efficient metrics at zero thresholds from the four-state chain."""
    p1, p2, p3, p4, p5 = probs
    if p5 >= 1.0:
        return Metrics.from_rates(0.0, 0.0, 0.0, 0.0, r0)
    a = p1 / (1 - p5)
    b = (p3 + p2 / 2 + p1 * p3 / (1 - p5)) / (1 - p3 - p5) if p3 + p5 < 1 else math.inf
    c = (p4 + p2 / 2 + p1 * p4 / (1 - p5)) / (1 - p4 - p5) if p4 + p5 < 1 else math.inf
    if math.isinf(b) or math.isinf(c):
        raise NumericalBreakdown("one link never supports the rate; delays are unbounded")
    norm = 1 + a + b + c
    s1 = p1 + p2 + p4
    s2 = p1 + p2 + p3
    r12 = (a + b) / norm * s1 * r0
    r21 = (a + c) / norm * s2 * r0
    t1, t2 = lemma1_min_delays(probs)
    half = r0 / 2
    return Metrics(r12, r21, 1 - r12 / half, 1 - r21 / half,
                   (a + b) / norm, (a + c) / norm, t1, t2)


def _safe_div(num, den):
    if den == 0.0 or not math.isfinite(den) or abs(den) < 1e-300:
        raise NumericalBreakdown("vanishing denominator in occupancy recursion")
    return num / den


def _boundary_weights(l_max, pa, pb, p1, p2, p5):
    """Backward recursion along one buffer axis.

    ``pa`` is the probability that only the link refilling this buffer is usable
    (R3 for B1), ``pb`` the one draining it (R4 for B1).  Returns weights on the
    axis states (l, 0) for l = 0..l_max and on the adjacent states (l, 1) for
    l = 1..l_max, with (l_max, 0) pinned to one; (0, 0) and (1, 1) are left to
    the caller.
    """
    one_m5 = 1.0 - p5
    k = _safe_div(1.0, pa + p1 * pa / one_m5)
    cross = p1 + p2 + pa * pb / one_m5
    axis = {l_max: 1.0}
    side = {l_max: _safe_div(p1 * (1 - pa - p5), pa * (1 + p1 - p5))}
    axis[l_max - 1] = _safe_div(one_m5, p1) * side[l_max]
    axis[l_max - 2] = k * (one_m5 * axis[l_max - 1] - (p1 + p2 + pb) - cross * side[l_max])
    for l in range(l_max - 1, 1, -1):
        side[l] = (pb * side[l + 1] + p1 * axis[l - 1]) / one_m5
        if l - 2 >= 1:
            axis[l - 2] = k * (one_m5 * axis[l - 1] - (p2 + pb) * axis[l] - cross * side[l])
    return axis, side


def prop3_occupancy(probs: RegionProbs, caps: tuple[int, int]) -> StationaryDist:
    """Stationary law of the throughput-efficient chain at zero thresholds.

    Two backward recursions, one anchored at (l1_max, 0) and one at (0, l2_max),
    are combined with a weight fixed by the balance equation of state (1, 0).
    """
    l1_max, l2_max = _check_caps(caps)
    if l1_max < 3 or l2_max < 3:
        raise ValueError("recursions need buffer capacities of at least 3")
    p1, p2, p3, p4, p5 = probs
    one_m5 = 1.0 - p5

    fa, fs = _boundary_weights(l1_max, p3, p4, p1, p2, p5)
    ga, gs = _boundary_weights(l2_max, p4, p3, p1, p2, p5)

    f = {(l, 0): v for l, v in fa.items()}
    f.update({(l, 1): v for l, v in fs.items()})
    g = {(0, l): v for l, v in ga.items()}
    g.update({(1, l): v for l, v in gs.items()})

    den = one_m5**2 - p1 * (p1 + p2)
    f[0, 0] = _safe_div(one_m5, den) * ((p2 + p4) * f[1, 0] + p4 * (p1 + p2) / one_m5 * f[2, 1])
    g[0, 0] = _safe_div(one_m5, den) * ((p2 + p3) * g[0, 1] + p3 * (p1 + p2) / one_m5 * g[1, 2])
    f[1, 1] = (p1 * f[0, 0] + p4 * f[2, 1]) / one_m5
    g[1, 1] = (p1 * g[0, 0] + p3 * g[1, 2]) / one_m5

    z = _safe_div(
        one_m5 * f[1, 0] - (p2 + p4) * f[2, 0] - (p1 + p2) * f[2, 1]
        - (p2 / 2 + p3) * f[0, 0] - p3 * f[1, 1],
        (p2 / 2 + p3) * g[0, 0] + p3 * g[1, 1],
    )

    space = reduce(build_te_min(probs, (l1_max, l2_max))).space
    w = np.array([f.get(s, 0.0) + z * g.get(s, 0.0) for s in space.states])
    total = w.sum()
    if not (math.isfinite(total) and total > 0):
        raise NumericalBreakdown("occupancy weights do not normalise")
    return StationaryDist(space, w / total)


@dataclass(frozen=True)
class ChainResult:
    metrics: Metrics
    dist: StationaryDist
    chain: TransitionMatrix


def evaluate(c: LinkConfig, t: Thresholds, caps: tuple[int, int], kind: PolicyKind,
             probs: RegionProbs | None = None) -> ChainResult:
    """Build, reduce and solve the chain of one operating point."""
    probs = region_probs_exact(c) if probs is None else probs
    tm = reduce(build_generic(probs, t, caps, kind))
    dist = stationary(tm)
    return ChainResult(metrics(dist, tm, c), dist, tm)
