"""Content popularity, ON-OFF traffic and its two-phase renewal form.

Each content alternates exponential ON periods (mean ``t_on``, the content
life-span) and OFF periods (mean ``t_off``).  While ON it is requested as a
Poisson process of rate ``V / t_on`` where ``V`` is its request volume per
ON period, drawn from a :class:`PopularityLaw`.  Seen from the request
epochs the process is renewal: an inter-request gap is *short* when the next
request falls in the same ON period and *long* otherwise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DomainError, NoSolutionError
from .mixture import ExpMixture
from .quadrature import gauss_legendre

__all__ = [
    "Pareto",
    "Zipf",
    "Degenerate",
    "PopularityLaw",
    "pareto_with_mean",
    "ContentClass",
    "TrafficMix",
    "Exponential",
    "ShiftedExponential",
    "ExpShiftedMixture",
    "ShortDist",
    "TwoPhaseRenewal",
    "onoff_to_renewal",
    "onoff_arrays",
    "poisson_renewal",
    "snm_equivalent_catalogue",
    "DistributionStats",
    "distribution_stats",
]


# ---------------------------------------------------------------------------
# popularity laws


@dataclass(frozen=True)
class Pareto:
    """Pareto request volume, optionally truncated at ``v_max``.

    Density ``beta * v_min**beta / v**(1 + beta)`` on ``[v_min, v_max]``
    (renormalised when truncated).
    """

    beta: float
    v_min: float
    v_max: Optional[float] = None

    def __post_init__(self):
        if not self.beta > 1.0:
            raise DomainError(f"Pareto exponent must exceed 1, got {self.beta}")
        if not self.v_min > 0.0:
            raise DomainError("v_min must be positive")
        if self.v_max is not None and not self.v_max > self.v_min:
            raise DomainError("v_max must exceed v_min")

    @property
    def _u_max(self):
        # survival at the truncation point, 0 when untruncated
        return 0.0 if self.v_max is None else (self.v_min / self.v_max) ** self.beta

    def mean(self):
        return _pareto_mean(self.v_min, self.beta, self.v_max)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        upper = np.inf if self.v_max is None else self.v_max
        # (v_min / v)**beta stays finite where v**(1 + beta) would overflow
        dens = self.beta * (self.v_min / v) ** self.beta / v / (1.0 - self._u_max)
        return np.where((v >= self.v_min) & (v <= upper), dens, 0.0)

    def sample(self, rng, size):
        u = rng.uniform(self._u_max, 1.0, size)
        # uniform(a, 1) may return a; u > 0 is guaranteed since a >= 0 and 1-a > 0
        u = np.where(u <= 0.0, 1.0, u)
        return self.v_min * u ** (-1.0 / self.beta)

    def quadrature(self, n):
        """Nodes ``v`` with per-content and per-request weights.

        Returns ``(v, count_w, rate_w)`` such that ``sum(count_w * g(v))``
        approximates ``E[g(V)]`` and ``sum(rate_w * g(v))`` approximates
        ``E[V g(V)] / E[V]``.  Both integrals use the substitution
        ``u = (v_min / v)**b`` that maps the tail onto a bounded interval,
        with ``b = beta`` for the plain law and ``b = beta - 1`` for the
        size-biased one.
        """
        v1, w1 = self._nodes(self.beta, n)
        v2, w2 = self._nodes(self.beta - 1.0, n)
        v = np.concatenate([v1, v2])
        return v, np.concatenate([w1, np.zeros(n)]), np.concatenate([np.zeros(n), w2])

    def _nodes(self, b, n):
        u_lo = 0.0 if self.v_max is None else (self.v_min / self.v_max) ** b
        u, w = gauss_legendre(u_lo, 1.0, n)
        return self.v_min * u ** (-1.0 / b), w / (1.0 - u_lo)


@dataclass(frozen=True)
class Zipf:
    """Zipf-like volumes over a finite catalogue.

    Content ``i`` (1-based) receives volume ``total_rate * i**-alpha / H``
    where ``H`` normalises the weights, so volumes sum to ``total_rate``.
    """

    alpha: float
    catalogue: int
    total_rate: float

    def __post_init__(self):
        if self.alpha < 0:
            raise DomainError("Zipf exponent must be non-negative")
        if self.catalogue < 1:
            raise DomainError("Zipf catalogue must hold at least one content")
        if not self.total_rate > 0:
            raise DomainError("total_rate must be positive")

    def atoms(self):
        p = np.arange(1, self.catalogue + 1, dtype=float) ** -self.alpha
        return self.total_rate * p / p.sum()

    def mean(self):
        return self.total_rate / self.catalogue

    def sample(self, rng, size):
        return rng.choice(self.atoms(), size=size)

    def quadrature(self, n=None):
        v = self.atoms()
        w = np.full(v.size, 1.0 / v.size)
        return v, w, w * v / v.mean()


@dataclass(frozen=True)
class Degenerate:
    """Every content attracts exactly ``v`` requests per ON period."""

    v: float

    def __post_init__(self):
        if not self.v > 0:
            raise DomainError("volume must be positive")

    def mean(self):
        return self.v

    def sample(self, rng, size):
        return np.full(size, float(self.v))

    def quadrature(self, n=None):
        one = np.ones(1)
        return np.array([float(self.v)]), one, one


PopularityLaw = Union[Pareto, Zipf, Degenerate]


def _pareto_mean(v_min, beta, v_max):
    if v_max is None:
        return v_min * beta / (beta - 1.0)
    x = v_min / v_max
    return v_min * beta / (beta - 1.0) * (1.0 - x ** (beta - 1.0)) / (1.0 - x**beta)


def pareto_with_mean(mean, beta, v_max=None):
    """Pareto law with the requested mean.

    Without truncation ``v_min = mean * (beta - 1) / beta``.  With ``v_max``
    the truncated mean is increasing in ``v_min`` and sweeps ``(0, v_max)``,
    so ``v_min`` is found by bisection to 1e-12 relative tolerance.
    """
    if not beta > 1.0:
        raise DomainError(f"Pareto exponent must exceed 1, got {beta}")
    if not mean > 0.0:
        raise DomainError("mean must be positive")
    if v_max is None:
        return Pareto(beta, mean * (beta - 1.0) / beta)
    if not mean < v_max:
        raise NoSolutionError(f"mean {mean} unattainable with truncation at {v_max}")
    lo, hi = 0.0, float(v_max)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if _pareto_mean(mid, beta, v_max) < mean:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * hi:
            break
    return Pareto(beta, 0.5 * (lo + hi), float(v_max))


# ---------------------------------------------------------------------------
# classes and mixes


@dataclass(frozen=True)
class ContentClass:
    """A catalogue segment sharing ON-OFF timing and a popularity law.

    ``t_off = 0`` denotes a stationary IRM class: every content is always
    ON and is requested as a Poisson process of rate ``V / t_on``.
    """

    label: str
    t_on: float
    t_off: float
    popularity: PopularityLaw
    catalogue: float
    cacheable: bool = True

    def __post_init__(self):
        if not self.t_on > 0:
            raise DomainError(f"class {self.label}: t_on must be positive")
        if self.t_off < 0:
            raise DomainError(f"class {self.label}: t_off must be non-negative")
        if self.catalogue < 0:
            raise DomainError(f"class {self.label}: catalogue must be non-negative")

    @property
    def irm(self):
        return self.t_off == 0

    @property
    def on_fraction(self):
        return self.t_on / (self.t_on + self.t_off)

    def on_rate(self, v):
        """ON-period request rate of a content with volume ``v``."""
        return np.asarray(v, dtype=float) / self.t_on

    def mean_rate(self, v):
        """Long-run request rate of a content with volume ``v``."""
        return self.on_rate(v) * self.on_fraction


@dataclass(frozen=True)
class TrafficMix:
    """Traffic offered at each of ``ingress_count`` leaf caches."""

    classes: tuple
    ingress_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise DomainError("class labels must be unique")
        if not self.total_catalogue > 0:
            raise DomainError("total catalogue must be positive")
        if self.ingress_count < 1:
            raise DomainError("at least one ingress cache is required")

    @property
    def total_catalogue(self):
        return sum(c.catalogue for c in self.classes)

    def label_index(self, label):
        for i, c in enumerate(self.classes):
            if c.label == label:
                return i
        raise KeyError(label)

    def check_off_periods(self, eviction_time):
        """Warn about classes whose OFF period is not long w.r.t. eviction.

        Returns the labels that triggered a warning.
        """
        short = [
            c.label
            for c in self.classes
            if not c.irm and c.t_off < 10.0 * eviction_time
        ]
        if short:
            warnings.warn(
                f"t_off below 10x eviction time {eviction_time:.4g} for classes {short}",
                stacklevel=2,
            )
        return short


def snm_equivalent_catalogue(gamma_rate, life_span, t_off):
    """Catalogue size giving the same mean number of active contents.

    A shot-noise workload with content arrival rate ``gamma_rate`` and
    rectangular shots of length ``life_span`` keeps ``gamma_rate *
    life_span`` contents active on average; an ON-OFF catalogue with
    ``t_on = life_span`` keeps ``M * t_on / (t_on + t_off)``.
    """
    if not (gamma_rate > 0 and life_span > 0 and t_off > 0):
        raise DomainError("all arguments must be positive")
    m = gamma_rate * life_span * (life_span + t_off) / life_span
    if not math.isfinite(m) or m > np.iinfo(np.int64).max:
        raise DomainError(f"catalogue size {m} is not representable")
    return int(round(m))


# ---------------------------------------------------------------------------
# inter-request laws


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("rate must be positive")

    def mixture(self):
        return ExpMixture([[1.0]], [[self.rate]])

    def mean(self):
        return 1.0 / self.rate


@dataclass(frozen=True)
class ShiftedExponential:
    """``shift + Exp(gamma)``; survival is 1 up to ``shift``.

    ``clamped`` marks fits that fell back to a mean-only exponential.
    """

    gamma: float
    shift: float
    clamped: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not self.gamma > 0 or self.shift < 0:
            raise DomainError("need gamma > 0 and shift >= 0")

    def mixture(self):
        return ExpMixture([[1.0]], [[self.gamma]], [[self.shift]])

    def mean(self):
        return self.shift + 1.0 / self.gamma


@dataclass(frozen=True)
class ExpShiftedMixture:
    """Weight ``q`` on ``Exp(lam)``, weight ``1 - q`` on ``shift + Exp(gamma)``."""

    q: float
    lam: float
    gamma: float
    shift: float
    clamped: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise DomainError("q must lie in [0, 1]")
        if not (self.lam > 0 and self.gamma > 0) or self.shift < 0:
            raise DomainError("need positive rates and shift >= 0")

    def mixture(self):
        return ExpMixture(
            [[self.q, 1.0 - self.q]], [[self.lam, self.gamma]], [[0.0, self.shift]]
        )

    def mean(self):
        return self.q / self.lam + (1.0 - self.q) * (self.shift + 1.0 / self.gamma)


ShortDist = Union[Exponential, ShiftedExponential, ExpShiftedMixture]


@dataclass(frozen=True)
class TwoPhaseRenewal:
    """Inter-request law mixing short (same ON period) and long gaps.

    ``p_short = 1`` with ``long_mean = inf`` is the Poisson (IRM) case.
    """

    p_short: float
    short: ShortDist
    long_mean: float

    def __post_init__(self):
        if not 0.0 <= self.p_short <= 1.0:
            raise DomainError("p_short must lie in [0, 1]")
        if self.p_short < 1.0 and not self.long_mean > self.short.mean():
            raise DomainError("long mean must exceed the short mean")

    def mixture(self):
        s = self.short.mixture()
        p = self.p_short
        long_rate = 1.0 / self.long_mean if math.isfinite(self.long_mean) else 1.0
        return ExpMixture(
            np.hstack([p * s.w, [[1.0 - p]]]),
            np.hstack([s.r, [[long_rate]]]),
            np.hstack([s.d, [[0.0]]]),
        )

    def mean(self):
        if self.p_short == 1.0:
            return self.short.mean()
        return self.p_short * self.short.mean() + (1.0 - self.p_short) * self.long_mean


def onoff_arrays(lam, t_on, t_off):
    """Vectorised two-phase parameters of an ON-OFF modulated Poisson source.

    Returns ``(p_short, short_rate, long_mean)``.  A short gap is the
    minimum of the next request and the end of the ON period, conditioned
    on the request winning, hence ``Exp(lam + 1/t_on)``.  A long gap is the
    residual ON time, the OFF period, and the time from the start of the
    next ON period to its first request; the latter sits behind a geometric
    number of empty ON periods each followed by an OFF period.
    """
    lam = np.asarray(lam, dtype=float)
    nu = lam + 1.0 / t_on
    p = lam / nu
    to_first = (1.0 / nu + (1.0 - p) * t_off) / p
    long_mean = 1.0 / nu + t_off + to_first
    return p, nu, long_mean


def onoff_to_renewal(lam, t_on, t_off):
    """Two-phase renewal law of a content requested at ``lam`` while ON."""
    if not (lam > 0 and t_on > 0 and t_off > 0):
        raise DomainError("lam, t_on and t_off must be positive")
    p, nu, long_mean = onoff_arrays(lam, t_on, t_off)
    return TwoPhaseRenewal(float(p), Exponential(float(nu)), float(long_mean))


def poisson_renewal(rate):
    """The IRM request law as a degenerate two-phase law."""
    return TwoPhaseRenewal(1.0, Exponential(rate), math.inf)


# ---------------------------------------------------------------------------
# statistics bundle


class DistributionStats:
    """Scalar view over one law: cdf, survival, age cdf, moments and mgf."""

    def __init__(self, mix: ExpMixture):
        if len(mix) != 1:
            raise ValueError("DistributionStats wraps a single law")
        self.mix = mix

    def cdf(self, t):
        return float(self.mix.cdf(t)[0])

    def survival(self, t):
        return float(self.mix.sf(t)[0])

    def age_cdf(self, t):
        return float(self.mix.age_cdf(t)[0])

    @property
    def mean(self):
        return float(self.mix.mean()[0])

    @property
    def second_moment(self):
        return float(self.mix.moment2()[0])

    @property
    def rate(self):
        return 1.0 / self.mean

    def mgf(self, s):
        if not s < 0:
            raise DomainError("mgf requires s < 0")
        return float(self.mix.mgf(s)[0])

    def sample(self, rng, size):
        return self.mix.sample(rng, size)


def distribution_stats(d):
    """Statistics of a :class:`TwoPhaseRenewal` or a short law."""
    return DistributionStats(d.mixture())
