"""Miss streams of solved caches as new two-phase renewal laws.

Within an ON period the request stream is treated as renewal with the
short-gap law.  Cycle analysis of a cache fed by a renewal stream gives the
first two moments of the inter-miss time; these are matched by a
two-parameter law (shifted exponential, or an exponential/shifted mixture
for q-LRU) and wrapped back into an ON-OFF law with the same ON and OFF
durations.  A parent cache sees the superposition of its children's miss
streams during the shared ON windows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .che import LRU, QLRU, RANDOM, TwoLRU
from .errors import DomainError, InfeasibleMomentsError, UnsupportedPolicyError
from .mixture import ExpMixture, head_moment
from .traffic import (
    DistributionStats,
    Exponential,
    ExpShiftedMixture,
    ShiftedExponential,
    TwoPhaseRenewal,
)

__all__ = [
    "MissMoments",
    "PooledShortDist",
    "short_miss_moments",
    "miss_moments_arrays",
    "fit_class1",
    "fit_class2",
    "fit_class1_arrays",
    "fit_class2_arrays",
    "on_miss_rate",
    "build_miss_renewal",
    "miss_law_arrays",
    "superpose_children",
    "pooled_moments_arrays",
]

@dataclass(frozen=True)
class MissMoments:
    m1: float
    m2: float
    miss_rate_on: float
    p_hit_upstream: float

    def __post_init__(self):
        if not (self.m1 > 0 and self.m2 >= self.m1 * self.m1 * (1 - 1e-12)):
            raise DomainError(f"non-physical moments m1={self.m1}, m2={self.m2}")


# ---------------------------------------------------------------------------
# cycle analysis


def _compound(hit_prob, hit_m1, mean, second, miss=None):
    """Moments of ``N`` hit gaps plus one miss gap, ``N`` geometric.

    ``hit_prob`` is the chance that a gap ends in a hit and ``hit_m1`` the
    unnormalised first moment of hit gaps, ``E[R; hit]``.  Expanding the
    compound-geometric sum gives ``E[X] = E[R]/(1-a)`` and ``E[X^2] =
    E[R^2]/(1-a) + 2 E[R; hit] E[R] / (1-a)^2``.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if miss is None:
            miss = 1.0 - hit_prob
        m1 = mean / miss
        m2 = second / miss + 2.0 * hit_m1 * mean / (miss * miss)
    none = miss <= 0.0
    return np.where(none, np.inf, m1), np.where(none, np.inf, m2)


def miss_moments_arrays(policy, law: ExpMixture, eviction):
    """Vectorised inter-miss moments ``(m1, m2)`` for renewal input ``law``."""
    mean, second = law.mean(), law.moment2()
    if isinstance(policy, (LRU, QLRU)):
        t_c = eviction.t_c
        if np.all(np.asarray(t_c) == 0):
            m1, m2 = mean, second
        else:
            a, pm1, _ = law.partial_moments(t_c)
            m1, m2 = _compound(a, pm1, mean, second, law.sf(t_c))
        if isinstance(policy, QLRU):
            # a miss is followed by another request-gap miss unless inserted
            q = policy.q
            m1 = (1.0 - q) * mean + q * m1
            m2 = (1.0 - q) * second + q * m2
        return m1, m2
    if isinstance(policy, RANDOM):
        mean_t_c = np.broadcast_to(np.asarray(eviction.mean_t_c, dtype=float), mean.shape)
        pos = mean_t_c > 0
        mu = 1.0 / np.where(pos, mean_t_c, 1.0)
        b, e1, _ = law.tilted_moments(-mu)
        # the next request beats the exponential sojourn with probability b
        b = np.where(pos, b, 0.0)
        e1 = np.where(pos, e1, 0.0)
        return _compound(b, e1, mean, second)
    if isinstance(policy, TwoLRU):
        raise UnsupportedPolicyError("miss streams of 2-LRU caches are not modelled")
    raise DomainError(f"unknown policy {policy!r}")


def on_miss_rate(mean_rate, p_hit, t_on, t_off):
    """Miss intensity during ON periods consistent with the long-run miss rate."""
    return mean_rate * (1.0 - p_hit) * (t_on + t_off) / t_on


def short_miss_moments(policy, stats, eviction, q=None, *, p_hit=None, mean_rate=None,
                       t_on=None, t_off=None):
    """Moments of the short inter-miss time of a cache fed by ``stats``.

    ``stats`` is the within-ON (short) request law.  When the ON-OFF
    context (``p_hit``, ``mean_rate``, ``t_on``, ``t_off`` of the full law)
    is given, ``miss_rate_on`` is the ON-period miss intensity implied by
    the long-run miss rate; otherwise it is the miss rate of the analysed
    renewal stream itself.
    """
    if isinstance(policy, QLRU) and q is not None and q != policy.q:
        raise DomainError("q disagrees with the policy")
    law = stats.mix if isinstance(stats, DistributionStats) else stats.mixture()
    m1, m2 = miss_moments_arrays(policy, law, eviction)
    m1, m2 = float(m1[0]), float(m2[0])
    if p_hit is None:
        return MissMoments(m1, m2, 1.0 / m1, 1.0 - float(law.mean()[0]) / m1)
    return MissMoments(m1, m2, float(on_miss_rate(mean_rate, p_hit, t_on, t_off)), p_hit)


# ---------------------------------------------------------------------------
# two-moment fits


def fit_class1_arrays(m1, m2):
    """Shifted-exponential fit; returns ``(gamma, shift, clamped)``.

    A squared coefficient of variation above one would need a negative
    shift; such fits fall back to the exponential with the same mean.
    """
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    var = m2 - m1 * m1
    if np.any(m1 <= 0) or np.any(var < -1e-12 * m1 * m1):
        raise DomainError("non-physical moments")
    sd = np.sqrt(np.maximum(var, 0.0))
    clamped = sd > m1
    with np.errstate(divide="ignore"):
        gamma = np.where(clamped, 1.0 / m1, 1.0 / sd)
    shift = np.where(clamped, 0.0, m1 - sd)
    if np.any(sd == 0):
        raise InfeasibleMomentsError("zero variance cannot be matched by a shifted exponential")
    return gamma, shift, clamped


def fit_class1(m1, m2):
    """Shifted exponential with mean ``m1`` and second moment ``m2``."""
    if not m1 > 0 or m2 < m1 * m1 * (1 - 1e-12):
        raise DomainError(f"non-physical moments m1={m1}, m2={m2}")
    gamma, shift, clamped = fit_class1_arrays(m1, m2)
    return ShiftedExponential(float(gamma), float(shift), bool(clamped))


def fit_class2_arrays(m1, m2, q, lam):
    """Exponential/shifted mixture fit with fixed weight ``q`` and rate ``lam``.

    The moments of a mixture are linear in the component moments, so the
    shifted component must carry mean ``(m1 - q/lam)/(1-q)`` and second
    moment ``(m2 - 2q/lam^2)/(1-q)``, which a shifted exponential matches
    exactly.  Returns ``(gamma, shift, clamped, ok)``; ``ok`` is False
    where no shifted exponential fits.
    """
    m1, m2, q, lam = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (m1, m2, q, lam)))
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = (m1 - q / lam) / (1.0 - q)
        c2 = (m2 - 2.0 * q / (lam * lam)) / (1.0 - q)
        var = c2 - c1 * c1
        ok = (q < 1.0) & (c1 > 0) & (var > 1e-14 * c1 * c1)
        sd = np.sqrt(np.where(ok, var, 1.0))
        c1s = np.where(ok, c1, 1.0)
        clamped = ok & (sd > c1s)
        gamma = np.where(clamped, 1.0 / c1s, 1.0 / sd)
        shift = np.where(clamped, 0.0, c1s - sd)
    return gamma, shift, clamped, ok


def fit_class2(m1, m2, q, lam):
    """Mixture with weight ``q`` on ``Exp(lam)`` matching ``(m1, m2)``."""
    if not m1 > 0 or m2 < m1 * m1 * (1 - 1e-12):
        raise DomainError(f"non-physical moments m1={m1}, m2={m2}")
    if not (0.0 <= q <= 1.0 and lam > 0):
        raise DomainError("need q in [0, 1] and lam > 0")
    if q == 1.0:
        if math.isclose(m1, 1.0 / lam, rel_tol=1e-9) and math.isclose(
            m2, 2.0 / lam**2, rel_tol=1e-9
        ):
            return ExpShiftedMixture(1.0, lam, lam, 0.0)
        raise InfeasibleMomentsError("q = 1 leaves no free parameter to match the moments")
    gamma, shift, clamped, ok = fit_class2_arrays(m1, m2, q, lam)
    if not bool(ok):
        raise InfeasibleMomentsError(
            f"no shifted exponential completes Exp({lam}) at weight {q} to ({m1}, {m2})"
        )
    return ExpShiftedMixture(q, lam, float(gamma), float(shift), bool(clamped))


# ---------------------------------------------------------------------------
# ON-OFF wrapping


def miss_law_arrays(mean_rate, p_hit, t_on, t_off, short: ExpMixture):
    """Two-phase miss law per representative.

    Returns ``(law, miss_rate, miss_rate_on)``.  The number of misses per ON
    period is taken geometric, as for requests, so ``p_short = mu t_on /
    (mu t_on + 1)`` with ``mu`` the ON-period miss intensity; the long mean
    closes the rate balance against the long-run miss rate.
    """
    miss_rate = mean_rate * (1.0 - p_hit)
    mu = on_miss_rate(mean_rate, p_hit, t_on, t_off)
    x = mu * t_on
    p = x / (x + 1.0)
    m_short = short.mean()
    live = miss_rate > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        long_mean = (1.0 / miss_rate - p * m_short) / (1.0 - p)
    long_mean = np.where(live, long_mean, 1.0)
    p = np.where(live, p, 0.0)
    law = ExpMixture(
        np.hstack([p[:, None] * short.w, (1.0 - p)[:, None]]),
        np.hstack([short.r, (1.0 / long_mean)[:, None]]),
        np.hstack([short.d, np.zeros((len(p), 1))]),
    )
    return law, miss_rate, mu


def build_miss_renewal(upstream: TwoPhaseRenewal, moments: MissMoments, fitted, t_on):
    """ON-OFF miss law of a cache fed by ``upstream``.

    ``moments.p_hit_upstream`` fixes the long-run miss rate and
    ``moments.miss_rate_on`` the geometric per-ON miss count.
    """
    if not moments.m1 > 0:
        raise DomainError("moments must be positive")
    if not getattr(fitted, "clamped", False) and not math.isclose(
        fitted.mean(), moments.m1, rel_tol=1e-6
    ):
        raise DomainError("fitted law does not match the first moment")
    mean_rate = 1.0 / upstream.mean()
    miss_rate = mean_rate * (1.0 - moments.p_hit_upstream)
    if miss_rate <= 0:
        return TwoPhaseRenewal(0.0, fitted, math.inf)
    x = moments.miss_rate_on * t_on
    p = x / (x + 1.0)
    long_mean = (1.0 / miss_rate - p * fitted.mean()) / (1.0 - p)
    return TwoPhaseRenewal(p, fitted, long_mean)


# ---------------------------------------------------------------------------
# superposition


def _as_class2(child):
    """Parameters ``(w, lam, gamma, shift)`` of a short law in mixture form."""
    if isinstance(child, Exponential):
        return 1.0, child.rate, child.rate, 0.0
    if isinstance(child, ShiftedExponential):
        return 0.0, child.gamma, child.gamma, child.shift
    if isinstance(child, ExpShiftedMixture):
        return child.q, child.lam, child.gamma, child.shift
    raise DomainError(f"cannot superpose {child!r}")


def pooled_moments_arrays(w, lam, gamma, shift, k):
    """First two moments of ``k`` pooled copies of a class-2 law.

    The pooled gap seen from an event has survival ``S(t) S_e(t)^(k-1)``
    with ``S_e`` the equilibrium survival.  On ``[0, shift]`` the integrals
    are incomplete gamma functions (:func:`head_moment`); beyond the shift both factors
    are sums of two exponentials and the binomial expansion integrates in
    closed form.
    """
    w, lam, gamma, shift = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (w, lam, gamma, shift))
    )
    w, lam, gamma, shift = (a.reshape(-1) for a in (w, lam, gamma, shift))
    mu = w / lam + (1.0 - w) * (shift + 1.0 / gamma)
    head1 = head_moment(w, lam, mu, k, shift)
    head2 = 2.0 * head_moment(w, lam, mu, k, shift, power=1)
    # tail on (shift, inf), u = t - shift
    ex = np.exp(-lam * shift)
    a1, b1 = w * ex, 1.0 - w
    a2, b2 = w * ex / (lam * mu), (1.0 - w) / (gamma * mu)
    tail1 = np.zeros_like(mu)
    tail2 = np.zeros_like(mu)
    for j in range(k):
        c = math.comb(k - 1, j) * a2**j * b2 ** (k - 1 - j)
        rho = j * lam + (k - 1 - j) * gamma
        for coef, rate in ((a1, rho + lam), (b1, rho + gamma)):
            term = c * coef
            tail1 += term / rate
            tail2 += 2.0 * term * (shift / rate + 1.0 / (rate * rate))
    return head1 + tail1, head2 + tail2


@dataclass(frozen=True)
class PooledShortDist:
    """Short gaps of ``k`` superposed identical child streams."""

    child: object
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("k must be at least 1")

    def survival(self, t):
        m = self.child.mixture()
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        sf = np.array([m.sf(x)[0] for x in flat])
        se = np.array([1.0 - m.age_cdf(x)[0] for x in flat])
        return (sf * se ** (self.k - 1)).reshape(t.shape)

    def _moments(self):
        m1, m2 = pooled_moments_arrays(*_as_class2(self.child), self.k)
        return float(m1[0]), float(m2[0])

    @property
    def mean(self):
        return self._moments()[0]

    @property
    def second_moment(self):
        return self._moments()[1]

    def refit(self):
        """Project back onto the two-parameter class of the child."""
        if self.k == 1:
            return self.child
        m1, m2 = self._moments()
        if isinstance(self.child, ExpShiftedMixture) and 0.0 < self.child.q < 1.0:
            try:
                return fit_class2(m1, m2, self.child.q, self.k * self.child.lam)
            except InfeasibleMomentsError:
                pass
        return fit_class1(m1, m2)


def superpose_children(child, k):
    """Pooled short law of ``k`` identical children."""
    return PooledShortDist(child, int(k))
