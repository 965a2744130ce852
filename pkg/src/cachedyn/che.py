"""Single-cache analysis under the Che (eviction-time) approximation.

The cache is summarised by an eviction time ``T_C``: a content stays cached
until ``T_C`` has elapsed without a request (exponentially distributed
sojourn for RANDOM).  Given ``T_C`` each content evolves independently, so
hit and occupancy probabilities follow from its inter-request law alone;
``T_C`` itself is the root of ``expected occupancy = capacity``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, DomainError, QuadratureError
from .mixture import ExpMixture
from .quadrature import BASE_NODES, MAX_NODES
from .traffic import DistributionStats, TrafficMix, onoff_arrays

__all__ = [
    "LRU",
    "QLRU",
    "RANDOM",
    "TwoLRU",
    "Policy",
    "Deterministic",
    "ExponentialMean",
    "HitPair",
    "Demand",
    "CacheSolveResult",
    "hit_lru",
    "hit_qlru",
    "hit_random",
    "hit_2lru",
    "policy_hits",
    "leaf_demand",
    "expected_occupancy",
    "solve_demand",
    "solve_eviction_time",
]

OCCUPANCY_TOL = 1e-6
QUAD_TOL = 1e-8
ROOT_RTOL = 1e-13
MAX_ITERATIONS = 200


@dataclass(frozen=True)
class LRU:
    name = "LRU"


@dataclass(frozen=True)
class QLRU:
    q: float

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise DomainError(f"q must lie in (0, 1], got {self.q}")

    @property
    def name(self):
        return f"q-LRU({self.q:g})"


@dataclass(frozen=True)
class RANDOM:
    name = "RANDOM"


COUPLINGS = ("renewal", "independent")


@dataclass(frozen=True)
class TwoLRU:
    """LRU cache behind an ID-only LRU filter of the same size.

    ``coupling`` selects how the physical-cache state and the filter state
    at the previous request are combined: ``'renewal'`` treats them exactly
    as functions of the previous gap, ``'independent'`` multiplies their
    marginals (see :func:`hit_2lru`).
    """

    coupling: str = "renewal"

    def __post_init__(self):
        if self.coupling not in COUPLINGS:
            raise DomainError(f"coupling must be one of {COUPLINGS}, got {self.coupling!r}")

    @property
    def name(self):
        return "2-LRU" if self.coupling == "renewal" else "2-LRU(independent)"


Policy = Union[LRU, QLRU, RANDOM, TwoLRU]


@dataclass(frozen=True)
class Deterministic:
    """Deterministic eviction time.

    For 2-LRU ``t_c`` belongs to the physical cache and ``t_c_virtual`` to
    the ID-only front cache.
    """

    t_c: float
    t_c_virtual: Optional[float] = None


@dataclass(frozen=True)
class ExponentialMean:
    """Exponentially distributed sojourn time (RANDOM)."""

    mean_t_c: float


class HitPair(NamedTuple):
    p_hit: object
    p_in: object


# ---------------------------------------------------------------------------
# per-content formulas (vectorised over ExpMixture rows)


def _mix(stats):
    return stats.mix if isinstance(stats, DistributionStats) else stats


def _wrap(stats, p_hit, p_in):
    if isinstance(stats, DistributionStats):
        return HitPair(float(p_hit[0]), float(p_in[0]))
    return HitPair(p_hit, p_in)


def hit_lru(stats, t_c):
    """A request hits iff the previous one came less than ``t_c`` ago."""
    m = _mix(stats)
    return _wrap(stats, m.cdf(t_c), m.age_cdf(t_c))


def _qlru_from_cdf(f, q):
    # root of p = f * (p + q (1 - p)); f < 1 or q > 0 keeps the denominator positive
    return q * f / (q * f + (1.0 - f))


def hit_qlru(stats, t_c, q):
    """Probabilistic insertion: closed-form root of the implicit equation."""
    m = _mix(stats)
    f = m.cdf(t_c)
    p_hit = _qlru_from_cdf(f, q)
    p_in = m.age_cdf(t_c) * (p_hit + q * (1.0 - p_hit))
    return _wrap(stats, p_hit, p_in)


def hit_random(stats, mean_t_c):
    """G/M/1/0 view: hit = loss probability, occupancy by cycle analysis."""
    m = _mix(stats)
    mean_t_c = np.broadcast_to(np.asarray(mean_t_c, dtype=float), (len(m),))
    finite = np.isfinite(mean_t_c) & (mean_t_c > 0)
    safe = np.where(finite, mean_t_c, 1.0)
    b = m.mgf(-1.0 / safe)
    p_in = safe / m.mean() * (1.0 - b)
    p_hit = np.where(finite, b, np.where(mean_t_c > 0, 1.0, 0.0))
    p_in = np.where(finite, p_in, np.where(mean_t_c > 0, 1.0, 0.0))
    return _wrap(stats, p_hit, p_in)


def hit_2lru(stats, t_c1, t_c2, coupling="renewal"):
    """Physical cache (eviction time ``t_c2``) behind an ID-only filter (``t_c1``).

    A request hits iff its gap is at most ``t_c2`` and, just before the
    previous request, the content sat in the physical cache or its ID in the
    filter.  Both events are functions of the previous gap and of earlier
    history, so for renewal input the probability ``u`` of their union solves
    ``u = F1 + max(F2 - F1, 0) u`` exactly; ``p_hit = F2 u``.
    ``coupling='independent'`` instead treats the two states as independent,
    which gives ``p_hit = F2 F1 / (1 - F2 (1 - F1))`` and overestimates the
    hit probability when the filter is nearly as long-lived as the cache.
    """
    if coupling not in COUPLINGS:
        raise DomainError(f"coupling must be one of {COUPLINGS}, got {coupling!r}")
    m = _mix(stats)
    f1 = m.cdf(t_c1)
    f2 = m.cdf(t_c2)
    if coupling == "independent":
        p_hit = _qlru_from_cdf(f2, f1)
        p_in = m.age_cdf(t_c2) * (p_hit + f1 * (1.0 - p_hit))
        return _wrap(stats, p_hit, p_in)
    denom = 1.0 - np.maximum(f2 - f1, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(f1 > 0.0, f1 / denom, 0.0)
    return _wrap(stats, f2 * u, m.age_cdf(t_c2) * u)


def policy_hits(policy, law, eviction):
    """Dispatch to the per-policy formula; returns ``(p_hit, p_in)`` arrays."""
    if isinstance(policy, LRU):
        return hit_lru(law, eviction.t_c)
    if isinstance(policy, QLRU):
        return hit_qlru(law, eviction.t_c, policy.q)
    if isinstance(policy, RANDOM):
        return hit_random(law, eviction.mean_t_c)
    if isinstance(policy, TwoLRU):
        return hit_2lru(law, eviction.t_c_virtual, eviction.t_c, policy.coupling)
    raise DomainError(f"unknown policy {policy!r}")


# ---------------------------------------------------------------------------
# demand: representative contents with quadrature weights


@dataclass
class Demand:
    """Representative contents offered to one cache.

    ``count_w`` converts per-content quantities into catalogue sums
    (occupancy); ``rate_w * rate`` converts them into request-rate sums.
    ``rate`` is each representative's long-run request rate at this cache.
    """

    law: ExpMixture
    rate: np.ndarray
    count_w: np.ndarray
    rate_w: np.ndarray
    cls: np.ndarray
    admitted: np.ndarray
    n_classes: int
    # ON-OFF timing of each representative, needed to rebuild miss laws
    t_on: np.ndarray = field(default=None)
    t_off: np.ndarray = field(default=None)

    def with_admission(self, admitted):
        return Demand(
            self.law, self.rate, self.count_w, self.rate_w, self.cls,
            np.asarray(admitted, dtype=bool), self.n_classes, self.t_on, self.t_off,
        )

    @property
    def admitted_count(self):
        return float(np.sum(self.count_w[self.admitted]))


def leaf_demand(mix: TrafficMix, n_nodes=BASE_NODES, rate_scale=1.0, filtered=()):
    """Demand seen by an ingress cache.

    ``rate_scale`` multiplies every ON-period request rate (``1 /
    ingress_count`` when one stream is split among the ingress caches).
    Classes marked non-cacheable or listed in ``filtered`` are not admitted.
    """
    parts, rate, cw, rw, cls, adm, ton, toff = [], [], [], [], [], [], [], []
    for k, c in enumerate(mix.classes):
        if c.catalogue <= 0:
            continue
        v, w_count, w_rate = c.popularity.quadrature(n_nodes)
        lam = c.on_rate(v) * rate_scale
        if c.irm:
            law = ExpMixture(np.ones((v.size, 1)), lam[:, None])
        else:
            p, nu, long_mean = onoff_arrays(lam, c.t_on, c.t_off)
            law = ExpMixture(np.c_[p, 1.0 - p], np.c_[nu, 1.0 / long_mean])
        parts.append(law)
        rate.append(lam * c.on_fraction)
        cw.append(c.catalogue * w_count)
        rw.append(c.catalogue * c.popularity.mean() * w_rate / v)
        cls.append(np.full(v.size, k))
        adm.append(np.full(v.size, c.cacheable and c.label not in filtered))
        ton.append(np.full(v.size, c.t_on))
        toff.append(np.full(v.size, c.t_off))
    return Demand(
        ExpMixture.concat(parts),
        np.concatenate(rate),
        np.concatenate(cw),
        np.concatenate(rw),
        np.concatenate(cls),
        np.concatenate(adm),
        len(mix.classes),
        np.concatenate(ton),
        np.concatenate(toff),
    )


def _occupancy(policy, demand, eviction):
    _, p_in = policy_hits(policy, demand.law, eviction)
    return float(np.sum(demand.count_w[demand.admitted] * p_in[demand.admitted]))


def expected_occupancy(policy, mix, eviction, filtered=(), rate_scale=1.0, rtol=QUAD_TOL):
    """Expected number of cached contents for a given eviction parameter.

    The popularity integral is refined by doubling the Gauss-Legendre order
    until two successive estimates agree to ``rtol``.
    """
    prev = None
    n = BASE_NODES
    while n <= MAX_NODES:
        value = _occupancy(policy, leaf_demand(mix, n, rate_scale, filtered), eviction)
        if prev is not None and abs(value - prev) <= rtol * max(abs(value), 1e-300):
            return value
        prev = value
        n *= 2
    raise QuadratureError(
        "occupancy quadrature did not converge", estimate=value, error=abs(value - prev)
    )


# ---------------------------------------------------------------------------
# fixed point


@dataclass
class CacheSolveResult:
    eviction: Union[Deterministic, ExponentialMean]
    phit_overall: float
    phit_by_class: list
    occupancy_residual: float
    phit_unweighted: float = float("nan")
    phit_unweighted_by_class: list = field(default_factory=list)
    saturated: bool = False
    # per-representative arrays
    p_hit: np.ndarray = field(default=None, repr=False)
    p_in: np.ndarray = field(default=None, repr=False)
    n_nodes: int = 0


def _eviction_of(policy, x, virtual=None):
    if isinstance(policy, RANDOM):
        return ExponentialMean(x)
    if isinstance(policy, TwoLRU):
        return Deterministic(x, virtual)
    return Deterministic(x)


def _bisect(fn, target, scale):
    """Root of the nondecreasing ``fn(x) = target`` on ``[0, inf)``.

    The bracket is grown by doubling from ``scale``; Brent's method then
    refines it.
    """
    lo, hi = 0.0, max(scale, 1e-12)
    f_hi = fn(hi)
    grow = 0
    while f_hi < target:
        lo = hi
        hi *= 2.0
        grow += 1
        if grow > 2000 or not math.isfinite(hi):
            raise BracketError(f"occupancy never reaches {target} (last {f_hi})")
        f_hi = fn(hi)
    if f_hi == target:
        return hi
    return brentq(lambda x: fn(x) - target, lo, hi, xtol=1e-300, rtol=ROOT_RTOL,
                  maxiter=MAX_ITERATIONS)


def _summarise(demand, p_hit):
    flow = demand.rate_w * demand.rate
    by_class, unw_by_class = [], []
    for k in range(demand.n_classes):
        sel = demand.cls == k
        tot = flow[sel].sum()
        by_class.append(float(np.sum(flow[sel] * p_hit[sel]) / tot) if tot > 0 else float("nan"))
        cnt = demand.count_w[sel].sum()
        unw_by_class.append(
            float(np.sum(demand.count_w[sel] * p_hit[sel]) / cnt) if cnt > 0 else float("nan")
        )
    overall = float(np.sum(flow * p_hit) / flow.sum())
    unweighted = float(np.sum(demand.count_w * p_hit) / demand.count_w.sum())
    return overall, by_class, unweighted, unw_by_class


def solve_demand(policy, demand: Demand, capacity):
    """Solve the capacity constraint for a prepared :class:`Demand`."""
    if capacity < 0:
        raise DomainError("capacity must be non-negative")
    adm = demand.admitted
    n = len(demand.law)
    if capacity == 0 or not adm.any():
        zero = np.zeros(n)
        ev = _eviction_of(policy, 0.0, 0.0)
        overall, by_class, unw, unw_c = _summarise(demand, zero)
        return CacheSolveResult(ev, overall, by_class, 0.0, unw, unw_c, False, zero, zero)

    if capacity >= demand.admitted_count:
        ev = _eviction_of(policy, math.inf, math.inf)
        p_hit = np.where(adm, 1.0, 0.0)
        overall, by_class, unw, unw_c = _summarise(demand, p_hit)
        return CacheSolveResult(ev, overall, by_class, 0.0, unw, unw_c, True, p_hit, p_hit.copy())

    sub = demand.law[adm]
    cw = demand.count_w[adm]
    scale = float(np.sum(cw * sub.mean()) / cw.sum())

    virtual = None
    if isinstance(policy, TwoLRU):
        def occ_virtual(t):
            return float(np.sum(cw * sub.age_cdf(t)))

        virtual = _bisect(occ_virtual, capacity, scale)

    def occ(x):
        _, p_in = policy_hits(policy, sub, _eviction_of(policy, x, virtual))
        return float(np.sum(cw * p_in))

    x = _bisect(occ, capacity, scale)
    ev = _eviction_of(policy, x, virtual)
    p_hit_sub, p_in_sub = policy_hits(policy, sub, ev)
    p_hit = np.zeros(n)
    p_in = np.zeros(n)
    p_hit[adm] = p_hit_sub
    p_in[adm] = p_in_sub
    residual = (float(np.sum(cw * p_in_sub)) - capacity) / capacity
    overall, by_class, unw, unw_c = _summarise(demand, p_hit)
    return CacheSolveResult(ev, overall, by_class, residual, unw, unw_c, False, p_hit, p_in)


def solve_eviction_time(policy, mix: TrafficMix, capacity, filtered=(), rate_scale=1.0,
                        n_nodes=None, rtol=QUAD_TOL):
    """Eviction time and hit probabilities of one cache fed by ``mix``.

    With ``n_nodes`` unset the quadrature order is doubled until the
    occupancy at the solved eviction time is stable to ``rtol``.
    """
    if n_nodes is not None:
        res = solve_demand(policy, leaf_demand(mix, n_nodes, rate_scale, filtered), capacity)
        res.n_nodes = n_nodes
        return res
    n = BASE_NODES
    while True:
        demand = leaf_demand(mix, n, rate_scale, filtered)
        res = solve_demand(policy, demand, capacity)
        res.n_nodes = n
        if res.saturated or capacity == 0:
            return res
        finer = leaf_demand(mix, 2 * n, rate_scale, filtered)
        occ = _occupancy(policy, finer, res.eviction)
        if abs(occ - capacity) <= rtol * capacity:
            return res
        n *= 2
        if n > MAX_NODES:
            raise QuadratureError(
                "eviction-time quadrature did not converge",
                estimate=occ, error=abs(occ - capacity) / capacity,
            )
