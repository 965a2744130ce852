"""Vectorised finite mixtures of shifted exponential distributions.

Every inter-request and inter-miss law handled by the analytic engine is a
finite mixture of components ``d + Exp(r)``: plain exponentials have
``d = 0``, the shifted-exponential class has one component, the
exponential/shifted mixture has two, and the ON-OFF two-phase law adds the
exponential long phase as one more component.  :class:`ExpMixture` stores
``N`` such laws side by side (one per representative content) so every
quantity is evaluated with array arithmetic.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special


__all__ = ["ExpMixture", "PooledMixture", "head_moment"]


def _col(x, n):
    """Broadcast a scalar or length-``n`` argument to a column vector."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        return np.full((n, 1), float(a))
    return a.reshape(n, 1)


class ExpMixture:
    """``N`` mixtures of ``K`` shifted exponentials.

    Parameters
    ----------
    weights, rates, shifts : array_like, shape (N, K)
        Component probabilities (rows sum to one), exponential rates
        (strictly positive) and non-negative shifts.  Components with zero
        weight are ignored but still need a finite positive rate.
    """

    __slots__ = ("w", "r", "d")

    def __init__(self, weights, rates, shifts=None):
        w = np.atleast_2d(np.asarray(weights, dtype=float))
        r = np.atleast_2d(np.asarray(rates, dtype=float))
        d = np.zeros_like(w) if shifts is None else np.atleast_2d(np.asarray(shifts, dtype=float))
        if not (w.shape == r.shape == d.shape):
            raise ValueError("weights, rates and shifts must share one shape")
        self.w, self.r, self.d = w, r, d

    @classmethod
    def concat(cls, parts):
        """Stack mixtures with possibly different component counts."""
        k = max(p.w.shape[1] for p in parts)

        def pad(a, fill):
            out = np.full((a.shape[0], k), fill)
            out[:, : a.shape[1]] = a
            return out

        return cls(
            np.vstack([pad(p.w, 0.0) for p in parts]),
            np.vstack([pad(p.r, 1.0) for p in parts]),
            np.vstack([pad(p.d, 0.0) for p in parts]),
        )

    def __len__(self):
        return self.w.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        return ExpMixture(self.w[idx], self.r[idx], self.d[idx])

    def __repr__(self):
        return f"ExpMixture(n={len(self)}, components={self.w.shape[1]})"

    # -- distribution functions -------------------------------------------

    def sf(self, t):
        """Survival function ``P(X > t)``."""
        t = _col(t, len(self))
        x = t - self.d
        comp = np.where(x <= 0.0, 1.0, np.exp(-self.r * np.maximum(x, 0.0)))
        return np.sum(self.w * comp, axis=1)

    def cdf(self, t):
        t = _col(t, len(self))
        x = np.maximum(t - self.d, 0.0)
        with np.errstate(invalid="ignore"):
            comp = np.where(np.isinf(x), 1.0, -np.expm1(-self.r * x))
        # weights sum to one only up to rounding
        return np.where(np.isinf(t[:, 0]), 1.0, np.sum(self.w * comp, axis=1))

    def integrated_sf(self, t):
        """``∫_0^t P(X > u) du``."""
        t = _col(t, len(self))
        x = t - self.d
        tail = self.d + (-np.expm1(-self.r * np.maximum(x, 0.0))) / self.r
        comp = np.where(x <= 0.0, t, tail)
        return np.sum(self.w * comp, axis=1)

    def age_cdf(self, t):
        """Equilibrium (age) cdf ``(1/E[X]) ∫_0^t P(X > u) du``."""
        t = np.asarray(t, dtype=float)
        out = self.integrated_sf(np.where(np.isinf(t), 0.0, t)) / self.mean()
        return np.where(np.broadcast_to(np.isinf(t), out.shape), 1.0, out)

    def mean(self):
        return np.sum(self.w * (self.d + 1.0 / self.r), axis=1)

    def moment2(self):
        r, d = self.r, self.d
        return np.sum(self.w * (d * d + 2.0 * d / r + 2.0 / (r * r)), axis=1)

    def mgf(self, s):
        """Moment generating function ``E[exp(sX)]`` for ``s < 0``."""
        s = _col(s, len(self))
        if np.any(s >= 0.0):
            raise ValueError("mgf is only defined here for s < 0")
        return np.sum(self.w * np.exp(s * self.d) * self.r / (self.r - s), axis=1)

    def tilted_moments(self, s):
        """``E[X^k exp(sX)]`` for ``k = 0, 1, 2`` and ``s < 0``."""
        s = _col(s, len(self))
        g = np.exp(s * self.d) * self.r / (self.r - s)
        inv = 1.0 / (self.r - s)
        a = self.d + inv
        m0 = np.sum(self.w * g, axis=1)
        m1 = np.sum(self.w * g * a, axis=1)
        m2 = np.sum(self.w * g * (a * a + inv * inv), axis=1)
        return m0, m1, m2

    def partial_moments(self, t):
        """``E[X^k; X <= t]`` for ``k = 0, 1, 2``."""
        t = _col(t, len(self))
        x = np.maximum(t - self.d, 0.0)
        rx = self.r * x
        p0 = special.gammainc(1.0, rx)
        y1 = special.gammainc(2.0, rx) / self.r
        y2 = 2.0 * special.gammainc(3.0, rx) / (self.r * self.r)
        d = self.d
        m0 = np.sum(self.w * p0, axis=1)
        m1 = np.sum(self.w * (d * p0 + y1), axis=1)
        m2 = np.sum(self.w * (d * d * p0 + 2.0 * d * y1 + y2), axis=1)
        return m0, m1, m2

    # -- sampling ------------------------------------------------------------

    def sample(self, rng, size, row=0):
        """Draw ``size`` variates from law number ``row``."""
        w = self.w[row]
        comp = rng.choice(len(w), size=size, p=w / w.sum())
        return self.d[row][comp] + rng.exponential(1.0, size) / self.r[row][comp]


def _power_integral(c, r, u):
    """``∫_0^u t^c e^{-r t} dt`` for integer ``c >= 0`` and ``r >= 0``."""
    x = r * u
    small = x < 1e-6
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        big = math.gamma(c + 1) * special.gammainc(c + 1, x) / r ** (c + 1)
    # three series terms of e^{-rt} leave an error of order x^3
    series = u ** (c + 1) * (1.0 / (c + 1) - x / (c + 2) + 0.5 * x * x / (c + 3))
    return np.where(small, series, big)


def head_moment(w, lam, mu, k, upper, sigma=None, power=0):
    """``∫_0^upper t^power e^{-sigma t} S(t) S_e(t)^(k-1) dt`` in closed form.

    On ``[0, shift]`` the child survival is ``w e + (1 - w)`` and its
    equilibrium survival ``A + B e + C t`` with ``e = exp(-lam t)``, so the
    multinomial expansion of the product leaves integrals of ``t^c
    e^{-r t}``, which are lower incomplete gamma functions.  ``mu`` is the
    child mean; all array arguments share one shape.
    """
    sigma = np.zeros_like(lam) if sigma is None else sigma
    a_coef = 1.0 - w / (lam * mu)
    b_coef = w / (lam * mu)
    c_coef = -(1.0 - w) / mu
    n = k - 1
    total = np.zeros_like(lam)
    for b in range(n + 1):
        for c in range(n + 1 - b):
            a = n - b - c
            coef = (math.factorial(n) / (math.factorial(a) * math.factorial(b) * math.factorial(c))
                    * a_coef**a * b_coef**b * c_coef**c)
            rate = b * lam + sigma
            total = total + coef * (w * _power_integral(c + power, rate + lam, upper)
                                    + (1.0 - w) * _power_integral(c + power, rate, upper))
    return total


class PooledMixture:
    """``N`` two-phase laws whose short phase pools ``k`` renewal streams.

    Each child stream has gaps ``w Exp(lam) + (1 - w) (shift + Exp(gamma))``.
    Seen from an event of the pooled stream, the next gap has survival
    ``S(t) S_e(t)**(k - 1)`` with ``S_e`` the child's equilibrium survival.
    With probability ``1 - p`` the gap is instead exponential with rate
    ``long_rate``.  Beyond ``shift`` the pooled survival is a finite sum of
    exponentials (binomial expansion); on ``[0, shift]`` integrals are
    incomplete gamma functions (:func:`head_moment`).
    """

    __slots__ = ("p", "w", "lam", "gamma", "shift", "k", "long_rate", "_c", "_rho")

    def __init__(self, p, w, lam, gamma, shift, k, long_rate):
        arrs = np.broadcast_arrays(*(np.asarray(a, dtype=float).reshape(-1)
                                     for a in (p, w, lam, gamma, shift, long_rate)))
        self.p, self.w, self.lam, self.gamma, self.shift, self.long_rate = arrs
        self.k = int(k)
        if self.k < 1:
            raise ValueError("k must be at least 1")
        mu = self._child_mean()
        ex = np.exp(-self.lam * self.shift)
        a1, b1 = self.w * ex, 1.0 - self.w
        a2, b2 = self.w * ex / (self.lam * mu), (1.0 - self.w) / (self.gamma * mu)
        c, rho = [], []
        for j in range(self.k):
            cj = math.comb(self.k - 1, j) * a2**j * b2 ** (self.k - 1 - j)
            rj = j * self.lam + (self.k - 1 - j) * self.gamma
            c += [cj * a1, cj * b1]
            rho += [rj + self.lam, rj + self.gamma]
        self._c = np.stack(c, axis=1)
        self._rho = np.stack(rho, axis=1)

    def __len__(self):
        return self.p.size

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        return PooledMixture(self.p[idx], self.w[idx], self.lam[idx], self.gamma[idx],
                             self.shift[idx], self.k, self.long_rate[idx])

    def __repr__(self):
        return f"PooledMixture(n={len(self)}, k={self.k})"

    def _child_mean(self):
        return self.w / self.lam + (1.0 - self.w) * (self.shift + 1.0 / self.gamma)

    def _head(self, t):
        """Pooled survival for ``0 <= t <= shift``; ``t`` has shape (N, M)."""
        w, lam = self.w[:, None], self.lam[:, None]
        em1 = np.expm1(-lam * t)
        s = w * (em1 + 1.0) + (1.0 - w)
        isf = w * (-em1) / lam + (1.0 - w) * t
        se = 1.0 - isf / self._child_mean()[:, None]
        return s * np.maximum(se, 0.0) ** (self.k - 1)

    def _head_integral(self, upper, sigma=None):
        """``∫_0^upper e^{-sigma u} S_pool(u) du`` over the head region."""
        return head_moment(self.w, self.lam, self._child_mean(), self.k, upper, sigma)

    def short_sf(self, t):
        t = np.broadcast_to(np.asarray(t, dtype=float), self.p.shape)
        u = np.maximum(t - self.shift, 0.0)
        with np.errstate(invalid="ignore"):
            tail = np.sum(self._c * np.exp(-self._rho * u[:, None]), axis=1)
        head = self._head(np.minimum(t, self.shift)[:, None])[:, 0]
        return np.where(t <= self.shift, head, tail)

    def short_integrated_sf(self, t):
        t = np.broadcast_to(np.asarray(t, dtype=float), self.p.shape)
        head = self._head_integral(np.minimum(t, self.shift))
        u = np.maximum(t - self.shift, 0.0)
        with np.errstate(invalid="ignore"):
            tail = np.sum(self._c * (-np.expm1(-self._rho * u[:, None])) / self._rho, axis=1)
        return head + tail

    def short_mean(self):
        return self._child_mean() / self.k

    def sf(self, t):
        t = np.broadcast_to(np.asarray(t, dtype=float), self.p.shape)
        return self.p * self.short_sf(t) + (1.0 - self.p) * np.exp(-self.long_rate * t)

    def cdf(self, t):
        return 1.0 - self.sf(t)

    def integrated_sf(self, t):
        t = np.broadcast_to(np.asarray(t, dtype=float), self.p.shape)
        long = -np.expm1(-self.long_rate * t) / self.long_rate
        return self.p * self.short_integrated_sf(t) + (1.0 - self.p) * long

    def age_cdf(self, t):
        t = np.broadcast_to(np.asarray(t, dtype=float), self.p.shape)
        out = self.integrated_sf(np.where(np.isinf(t), 0.0, t)) / self.mean()
        return np.where(np.isinf(t), 1.0, out)

    def mean(self):
        return self.p * self.short_mean() + (1.0 - self.p) / self.long_rate

    def mgf(self, s):
        """``E[exp(sX)]`` for ``s < 0``, from the Laplace transform of the survival."""
        s = np.broadcast_to(np.asarray(s, dtype=float), self.p.shape)
        if np.any(s >= 0.0):
            raise ValueError("mgf is only defined here for s < 0")
        sigma = -s
        head = self._head_integral(self.shift, sigma)
        tail = np.exp(-sigma * self.shift) * np.sum(self._c / (self._rho + sigma[:, None]), axis=1)
        short = 1.0 - sigma * (head + tail)
        long = self.long_rate / (self.long_rate + sigma)
        return self.p * short + (1.0 - self.p) * long
