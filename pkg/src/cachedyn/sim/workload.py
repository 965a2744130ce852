"""Request workloads for the simulator.

A workload is a set of activity intervals, each carrying a Poisson request
rate at one or all leaves.  Requests inside ``[t0, t1)`` are produced on
demand, so memory scales with the chunk length rather than the horizon.
All draws come from :mod:`cachedyn.sim.rng` keyed by content, interval,
chunk, leaf and position.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import poisson

from ..errors import DomainError
from ..traffic import Degenerate, Pareto, TrafficMix, Zipf
from . import rng

__all__ = [
    "SynchronizedOnOff",
    "IndependentOnOff",
    "SnmRectangular",
    "WorkloadMode",
    "Workload",
    "poisson_inverse",
    "volume_quantile",
]

# Poisson inversion switches to the library quantile above this mean
_DIRECT_MEAN = 200.0


@dataclass(frozen=True)
class SynchronizedOnOff:
    """One modulator per content, shared by every leaf."""

    name = "synchronized"


@dataclass(frozen=True)
class IndependentOnOff:
    """One modulator per content and leaf."""

    name = "independent"


@dataclass(frozen=True)
class SnmRectangular:
    """Shot noise with rectangular shots of length ``t_on``.

    Contents of a class are born as a Poisson process of rate
    ``gamma_rate``; each stays active for ``t_on`` and is never requested
    again.  When ``gamma_rate`` is None every class uses the rate that
    keeps as many contents active as its ON-OFF counterpart,
    ``catalogue / (t_on + t_off)``.
    """

    gamma_rate: Optional[float] = None
    name = "snm"


WorkloadMode = SynchronizedOnOff | IndependentOnOff | SnmRectangular


def poisson_inverse(u, mu):
    """Poisson quantiles ``min{k : P(N <= k) >= u}`` by sequential search."""
    shape = np.broadcast(np.asarray(u), np.asarray(mu)).shape
    u, mu = (np.broadcast_to(np.asarray(a, dtype=float), shape).reshape(-1) for a in (u, mu))
    k = np.zeros(u.shape, dtype=np.int64)
    big = mu > _DIRECT_MEAN
    if np.any(big):
        k[big] = poisson.ppf(u[big], mu[big]).astype(np.int64)
    idx = np.flatnonzero(~big)
    p = np.exp(-mu[idx])
    f = p.copy()
    m = mu[idx]
    uu = u[idx]
    live = uu > f
    idx, p, f, m, uu = idx[live], p[live], f[live], m[live], uu[live]
    while idx.size:
        k[idx] += 1
        p *= m / k[idx]
        f += p
        # stop where rounding leaves the cumulative sum just short of u
        live = (uu > f) & (p > 1e-300)
        idx, p, f, m, uu = idx[live], p[live], f[live], m[live], uu[live]
    return k.reshape(shape)


def volume_quantile(law, u, index):
    """Request volumes for uniforms ``u``; Zipf volumes follow the rank ``index``."""
    if isinstance(law, Pareto):
        tail = law._u_max
        return law.v_min * (tail + (1.0 - tail) * (1.0 - u)) ** (-1.0 / law.beta)
    if isinstance(law, Degenerate):
        return np.full(np.shape(u), float(law.v))
    if isinstance(law, Zipf):
        atoms = law.atoms()
        return atoms[np.asarray(index) % atoms.size]
    raise DomainError(f"unknown popularity law {law!r}")


@dataclass
class _Intervals:
    start: np.ndarray
    end: np.ndarray
    rate: np.ndarray      # per-leaf Poisson rate while active
    content: np.ndarray
    leaf: np.ndarray      # -1: every leaf
    key: np.ndarray       # modulator key, unique per modulator
    ordinal: np.ndarray   # index of the interval within its modulator


class Workload:
    """Requests of a :class:`TrafficMix` at ``mix.ingress_count`` leaves.

    Parameters
    ----------
    mix : TrafficMix
    mode : WorkloadMode
    horizon : float
        Requests are generated on ``[0, horizon)``; ON-OFF modulators start
        in their stationary state at time 0.
    seed : int
    routing : {'per_leaf', 'split'}
        ``'per_leaf'`` gives each leaf its own Poisson stream at the full
        ON rate, ``'split'`` divides the rate among leaves.
    """

    def __init__(self, mix: TrafficMix, mode, horizon, seed, routing="per_leaf"):
        if routing not in ("per_leaf", "split"):
            raise DomainError(f"unknown routing {routing!r}")
        if not horizon > 0:
            raise DomainError("horizon must be positive")
        self.mix = mix
        self.mode = mode
        self.horizon = float(horizon)
        self.seed = int(seed)
        self.leaves = mix.ingress_count
        self.rate_scale = 1.0 / self.leaves if routing == "split" else 1.0
        if isinstance(mode, SnmRectangular):
            self._build_snm(mode)
        elif isinstance(mode, (SynchronizedOnOff, IndependentOnOff)):
            self._build_onoff(isinstance(mode, IndependentOnOff))
        else:
            raise DomainError(f"unknown workload mode {mode!r}")
        order = np.argsort(self.iv.start, kind="stable")
        self.iv = _Intervals(*(getattr(self.iv, f)[order] for f in _Intervals.__dataclass_fields__))

    # -- construction -----------------------------------------------------

    def _class_sizes(self):
        return [int(round(c.catalogue)) for c in self.mix.classes]

    def _build_onoff(self, independent):
        sizes = self._class_sizes()
        self.n_contents = sum(sizes)
        self.content_class = np.repeat(np.arange(len(sizes)), sizes).astype(np.int32)
        offset = 0
        parts = []
        for k, (c, n) in enumerate(zip(self.mix.classes, sizes)):
            if n == 0:
                continue
            ids = np.arange(offset, offset + n, dtype=np.int64)
            u = rng.uniform(self.seed, rng.STREAM_VOLUME, ids)
            lam = volume_quantile(c.popularity, u, ids - offset) / c.t_on * self.rate_scale
            if independent and self.leaves > 1:
                ids_m = np.repeat(ids, self.leaves)
                leaf = np.tile(np.arange(self.leaves), n)
                lam_m = np.repeat(lam, self.leaves)
                key = ids_m * self.leaves + leaf
            else:
                ids_m, lam_m, key = ids, lam, ids
                leaf = np.full(n, -1)
            parts.append(self._modulate(c, ids_m, lam_m, leaf, key))
            offset += n
        self.iv = _Intervals(*(np.concatenate(x) for x in zip(*parts)))

    def _modulate(self, c, content, lam, leaf, key):
        """ON intervals within ``[0, horizon)`` of stationary modulators."""
        h = self.horizon
        if c.irm:
            z = np.zeros(content.size)
            return (z, np.full(content.size, h), lam, content, leaf, key,
                    np.zeros(content.size, dtype=np.int64))
        seed = self.seed
        on0 = rng.uniform(seed, rng.STREAM_MODULATOR, key, 0) < c.on_fraction
        # draw k >= 1 gives the k-th phase duration
        t = np.zeros(content.size)
        first_off = -c.t_off * np.log(rng.uniform(seed, rng.STREAM_MODULATOR, key, 1))
        t = np.where(on0, 0.0, first_off)
        draw = np.where(on0, 1, 2).astype(np.int64)
        ordinal = np.zeros(content.size, dtype=np.int64)
        out = []
        idx = np.flatnonzero(t < h)
        t = t[idx]
        draw = draw[idx]
        ordinal = ordinal[idx]
        while idx.size:
            kk = key[idx]
            on_len = -c.t_on * np.log(rng.uniform(seed, rng.STREAM_MODULATOR, kk, draw))
            end = np.minimum(t + on_len, h)
            out.append((t, end, lam[idx], content[idx], leaf[idx], kk, ordinal))
            off_len = -c.t_off * np.log(rng.uniform(seed, rng.STREAM_MODULATOR, kk, draw + 1))
            t = t + on_len + off_len
            draw = draw + 2
            ordinal = ordinal + 1
            live = t < h
            idx, t, draw, ordinal = idx[live], t[live], draw[live], ordinal[live]
        return tuple(np.concatenate(x) for x in zip(*out))

    def _build_snm(self, mode):
        if mode.gamma_rate is not None and len(self.mix.classes) != 1:
            raise DomainError("an explicit shot rate needs a single-class mix")
        h = self.horizon
        parts = []
        offset = 0
        classes = []
        for k, c in enumerate(self.mix.classes):
            life = c.t_on
            gamma = mode.gamma_rate if mode.gamma_rate is not None else c.catalogue / (c.t_on + c.t_off)
            if c.catalogue == 0 or gamma == 0:
                continue
            span = h + life
            n = int(poisson_inverse(rng.uniform(self.seed, rng.STREAM_SHOT, k, 0), np.array(gamma * span)))
            born = -life + span * np.sort(rng.uniform(self.seed, rng.STREAM_SHOT, k, 1 + np.arange(n)))
            ids = np.arange(offset, offset + n, dtype=np.int64)
            u = rng.uniform(self.seed, rng.STREAM_VOLUME, ids)
            lam = volume_quantile(c.popularity, u, ids - offset) / life * self.rate_scale
            start = np.maximum(born, 0.0)
            end = np.minimum(born + life, h)
            keep = end > start
            ids, lam, start, end = ids[keep], lam[keep], start[keep], end[keep]
            parts.append((start, end, lam, ids, np.full(ids.size, -1), ids,
                          np.zeros(ids.size, dtype=np.int64)))
            classes.append(np.full(n, k, dtype=np.int32))
            offset += n
        self.n_contents = offset
        self.content_class = np.concatenate(classes) if classes else np.zeros(0, np.int32)
        if not parts:
            raise DomainError("the shot-noise workload has no contents")
        self.iv = _Intervals(*(np.concatenate(x) for x in zip(*parts)))

    # -- requests ---------------------------------------------------------

    @property
    def n_intervals(self):
        return self.iv.start.size

    def expected_requests(self, t0, t1):
        iv = self.iv
        span = np.clip(np.minimum(iv.end, t1) - np.maximum(iv.start, t0), 0.0, None)
        fan = np.where(iv.leaf < 0, self.leaves, 1)
        return float(np.sum(iv.rate * span * fan))

    def requests(self, t0, t1, chunk):
        """Requests in ``[t0, t1)`` sorted by time.

        ``chunk`` is an integer label of the window; it enters the keys of
        every draw, so the same window always yields the same requests.
        Returns ``(time, content, leaf, cls)``.
        """
        iv = self.iv
        hi = np.searchsorted(iv.start, t1, side="left")
        sel = np.flatnonzero(iv.end[:hi] > t0)
        a = np.maximum(iv.start[sel], t0)
        b = np.minimum(iv.end[sel], t1)
        leaf = iv.leaf[sel]
        shared = leaf < 0
        if self.leaves > 1 and np.any(shared):
            rep = np.where(shared, self.leaves, 1)
            pick = np.repeat(np.arange(sel.size), rep)
            # leaf number within each expanded group
            first = np.cumsum(rep) - rep
            within = np.arange(pick.size) - np.repeat(first, rep)
            leaf = np.where(shared[pick], within, leaf[pick])
            sel, a, b = sel[pick], a[pick], b[pick]
        else:
            leaf = np.where(shared, 0, leaf)
        key, ordv = iv.key[sel], iv.ordinal[sel]
        mu = iv.rate[sel] * (b - a)
        u = rng.uniform(self.seed, rng.STREAM_COUNT, key, ordv, chunk, leaf)
        n = poisson_inverse(u, mu)
        pick = np.repeat(np.arange(sel.size), n)
        first = np.cumsum(n) - n
        j = np.arange(pick.size) - np.repeat(first, n)
        ut = rng.uniform(self.seed, rng.STREAM_TIME, key[pick], ordv[pick], chunk, leaf[pick], j)
        t = a[pick] + (b[pick] - a[pick]) * ut
        content = iv.content[sel][pick]
        order = np.argsort(t, kind="stable")
        content = content[order].astype(np.int64)
        return t[order], content, leaf[pick][order].astype(np.int32), self.content_class[content]
