import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachedyn import (
    LRU,
    QLRU,
    RANDOM,
    Deterministic,
    ExponentialMean,
    TwoLRU,
    distribution_stats,
    fit_class1,
    fit_class2,
    hit_random,
    onoff_to_renewal,
    short_miss_moments,
    superpose_children,
)
from cachedyn.errors import DomainError, InfeasibleMomentsError, UnsupportedPolicyError
from cachedyn.miss_stream import MissMoments, build_miss_renewal
from cachedyn.traffic import Exponential, ExpShiftedMixture, ShiftedExponential, TwoPhaseRenewal

EXP1 = distribution_stats(Exponential(1.0))
LN2 = math.log(2.0)


def class2_moments(q, lam, gamma, shift):
    c1 = shift + 1 / gamma
    c2 = shift**2 + 2 * shift / gamma + 2 / gamma**2
    return q / lam + (1 - q) * c1, 2 * q / lam**2 + (1 - q) * c2


# ---------------------------------------------------------------------------
# single-content Monte Carlo of one cache slot fed by a renewal stream


def _miss_times(gaps, policy, eviction, rng):
    t = np.cumsum(gaps)
    if isinstance(policy, LRU):
        miss = np.concatenate([[True], gaps[1:] > eviction.t_c])
        return t[miss]
    miss = np.zeros(gaps.size, dtype=bool)
    if isinstance(policy, QLRU):
        coin = rng.random(gaps.size) < policy.q
        cached = False
        for i in range(gaps.size):
            if cached and gaps[i] <= eviction.t_c:
                continue
            miss[i] = True
            cached = bool(coin[i])
        return t[miss]
    expiry = rng.exponential(eviction.mean_t_c, gaps.size)
    until = -1.0
    for i in range(gaps.size):
        if t[i] >= until:
            miss[i] = True
            until = t[i] + expiry[i]
    return t[miss]


def _check_against_mc(policy, renewal, eviction, rng, n):
    stats = distribution_stats(renewal)
    mm = short_miss_moments(policy, stats, eviction)
    x = np.diff(_miss_times(stats.sample(rng, n), policy, eviction, rng))
    for order, model in ((1, mm.m1), (2, mm.m2)):
        y = x**order
        se = y.std() / math.sqrt(y.size)
        assert abs(y.mean() - model) < 3.5 * se, (order, y.mean(), model, se)


class TestShortMissMoments:
    def test_lru_memoryless(self):
        mm = short_miss_moments(LRU(), EXP1, Deterministic(LN2))
        assert mm.m1 == pytest.approx(2.0, rel=1e-12)
        assert mm.miss_rate_on == pytest.approx(0.5, rel=1e-12)
        assert mm.p_hit_upstream == pytest.approx(0.5, rel=1e-12)

    def test_empty_cache_is_transparent(self):
        stats = distribution_stats(ShiftedExponential(2.0, 0.3))
        mm = short_miss_moments(LRU(), stats, Deterministic(0.0))
        assert mm.m1 == pytest.approx(stats.mean, rel=1e-14)
        assert mm.m2 == pytest.approx(stats.second_moment, rel=1e-14)

    def test_random_memoryless(self):
        mm = short_miss_moments(RANDOM(), EXP1, ExponentialMean(1.0))
        assert 1.0 - hit_random(EXP1, 1.0).p_hit == pytest.approx(0.5)
        assert mm.m1 == pytest.approx(2.0, rel=1e-12)

    def test_two_lru_unsupported(self):
        with pytest.raises(UnsupportedPolicyError):
            short_miss_moments(TwoLRU(), EXP1, Deterministic(1.0, 1.0))

    def test_q_mismatch(self):
        with pytest.raises(DomainError):
            short_miss_moments(QLRU(0.5), EXP1, Deterministic(1.0), q=0.25)

    def test_lru_monte_carlo(self, rng):
        _check_against_mc(LRU(), onoff_to_renewal(2.0, 3.0, 27.0), Deterministic(1.5), rng, 1_000_000)

    def test_qlru_monte_carlo(self, rng):
        _check_against_mc(QLRU(0.3), onoff_to_renewal(1.0, 7.0, 63.0), Deterministic(4.0), rng, 300_000)

    def test_random_monte_carlo(self, rng):
        _check_against_mc(RANDOM(), onoff_to_renewal(1.0, 7.0, 63.0), ExponentialMean(6.0), rng, 300_000)

    @settings(max_examples=6)
    @given(
        st.sampled_from(["lru", "qlru", "random"]),
        st.floats(0.2, 5.0), st.floats(0.5, 10.0), st.floats(0.1, 20.0),
        st.integers(0, 2**32 - 1),
    )
    def test_randomised_monte_carlo(self, which, lam, t_on, x, seed):
        rng = np.random.default_rng(seed)
        renewal = onoff_to_renewal(lam, t_on, 9 * t_on)
        pol, ev = {
            "lru": (LRU(), Deterministic(x)),
            "qlru": (QLRU(0.4), Deterministic(x)),
            "random": (RANDOM(), ExponentialMean(x)),
        }[which]
        _check_against_mc(pol, renewal, ev, rng, 100_000)


class TestFits:
    def test_class1_example(self):
        d = fit_class1(2.0, 5.0)
        assert (d.gamma, d.shift, d.clamped) == (pytest.approx(1.0), pytest.approx(1.0), False)

    def test_class1_exponential_boundary(self):
        d = fit_class1(1.0, 2.0)
        assert d.gamma == pytest.approx(1.0) and d.shift == 0.0 and not d.clamped

    def test_class1_clamped(self):
        d = fit_class1(1.0, 3.0)
        assert d.clamped and d.shift == 0.0 and d.gamma == pytest.approx(1.0)

    def test_class1_non_physical(self):
        with pytest.raises(DomainError):
            fit_class1(1.0, 0.5)
        with pytest.raises(DomainError):
            fit_class1(-1.0, 2.0)

    @given(st.floats(1e-3, 1e3), st.floats(1e-3, 0.999))
    def test_class1_round_trip(self, m1, cv):
        m2 = m1 * m1 * (1 + cv * cv)
        d = fit_class1(m1, m2)
        got1 = d.shift + 1 / d.gamma
        got2 = d.shift**2 + 2 * d.shift / d.gamma + 2 / d.gamma**2
        assert got1 == pytest.approx(m1, rel=1e-6)
        assert got2 == pytest.approx(m2, rel=1e-6)

    def test_class2_round_trip(self):
        m1, m2 = class2_moments(0.25, 1.0, 2.0, 0.5)
        d = fit_class2(m1, m2, 0.25, 1.0)
        assert d.gamma == pytest.approx(2.0, rel=1e-6)
        assert d.shift == pytest.approx(0.5, rel=1e-6)

    @given(st.floats(0.01, 0.9), st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.0, 5.0))
    def test_class2_round_trip_property(self, q, lam, gamma, shift):
        m1, m2 = class2_moments(q, lam, gamma, shift)
        try:
            d = fit_class2(m1, m2, q, lam)
        except InfeasibleMomentsError:
            return
        assert class2_moments(d.q, d.lam, d.gamma, d.shift)[0] == pytest.approx(m1, rel=1e-6)
        if not d.clamped:
            assert class2_moments(d.q, d.lam, d.gamma, d.shift)[1] == pytest.approx(m2, rel=1e-6)

    def test_class2_small_q_is_class1(self):
        a = fit_class2(2.0, 5.0, 1e-12, 3.0)
        b = fit_class1(2.0, 5.0)
        assert a.gamma == pytest.approx(b.gamma, rel=1e-9)
        assert a.shift == pytest.approx(b.shift, rel=1e-9)

    def test_class2_q_one(self):
        d = fit_class2(0.5, 0.5, 1.0, 2.0)
        assert d.q == 1.0 and d.lam == 2.0
        with pytest.raises(InfeasibleMomentsError):
            fit_class2(1.0, 3.0, 1.0, 2.0)


class TestBuildMissRenewal:
    def _lru_case(self, p_hit):
        upstream = onoff_to_renewal(1.0, 7.0, 63.0)
        mean_rate = 1.0 / upstream.mean()
        mm = short_miss_moments(LRU(), distribution_stats(upstream.short), Deterministic(0.9),
                                p_hit=p_hit, mean_rate=mean_rate, t_on=7.0, t_off=63.0)
        return upstream, mm, mean_rate

    def test_rate_balance(self):
        upstream, mm, mean_rate = self._lru_case(0.5)
        law = build_miss_renewal(upstream, mm, fit_class1(mm.m1, mm.m2), 7.0)
        assert 1.0 / law.mean() == pytest.approx(mean_rate * 0.5, rel=1e-9)
        assert law.p_short == pytest.approx(mm.miss_rate_on * 7 / (mm.miss_rate_on * 7 + 1))

    def test_transparent_cache(self):
        upstream = onoff_to_renewal(1.0, 7.0, 63.0)
        mm = MissMoments(upstream.short.mean(), 2 * upstream.short.mean() ** 2, 1.0, 0.0)
        law = build_miss_renewal(upstream, mm, upstream.short, 7.0)
        assert law.mean() == pytest.approx(upstream.mean(), rel=1e-12)

    def test_no_misses(self):
        upstream, mm, _ = self._lru_case(1.0)
        law = build_miss_renewal(upstream, mm, fit_class1(mm.m1, mm.m2), 7.0)
        assert law.p_short == 0.0 and math.isinf(law.long_mean)

    def test_inconsistent_fit(self):
        upstream, mm, _ = self._lru_case(0.5)
        with pytest.raises(DomainError):
            build_miss_renewal(upstream, mm, ShiftedExponential(1.0, 10 * mm.m1), 7.0)

    @given(st.floats(0.0, 0.99), st.floats(0.1, 5.0))
    def test_rate_balance_property(self, p_hit, t_c):
        upstream = onoff_to_renewal(2.0, 3.0, 27.0)
        mean_rate = 1.0 / upstream.mean()
        mm = short_miss_moments(LRU(), distribution_stats(upstream.short), Deterministic(t_c),
                                p_hit=p_hit, mean_rate=mean_rate, t_on=3.0, t_off=27.0)
        fitted = fit_class1(mm.m1, mm.m2)
        try:
            law = build_miss_renewal(upstream, mm, fitted, 3.0)
        except DomainError:
            # long mean would undercut the short mean: outside the two-phase class
            return
        assert 1.0 / law.mean() == pytest.approx(mean_rate * (1 - p_hit), rel=1e-9)


class TestSuperpose:
    def test_identity(self):
        child = ShiftedExponential(1.0, 1.0)
        assert superpose_children(child, 1).refit() is child

    def test_poisson(self):
        pooled = superpose_children(Exponential(3.0), 2)
        assert pooled.survival(0.4) == pytest.approx(math.exp(-6.0 * 0.4), rel=1e-12)
        fit = pooled.refit()
        assert fit.shift == pytest.approx(0.0, abs=1e-9)
        assert fit.gamma == pytest.approx(6.0, rel=1e-9)

    def test_class1_survival(self):
        pooled = superpose_children(ShiftedExponential(1.0, 1.0), 2)
        assert pooled.survival(0.5) == pytest.approx(0.75, rel=1e-12)

    def test_class1_tail_rate(self):
        # beyond the shift both factors decay at gamma, so the pooled rate is K gamma
        pooled = superpose_children(ShiftedExponential(0.5, 1.0), 3)
        ratio = pooled.survival(4.0) / pooled.survival(3.0)
        assert ratio == pytest.approx(math.exp(-3 * 0.5), rel=1e-9)

    def test_class1_monte_carlo(self, rng):
        n = 400_000
        streams = [np.cumsum(1.0 + rng.exponential(1.0, n)) for _ in range(2)]
        merged = np.sort(np.concatenate(streams))
        merged = merged[merged < min(s[-1] for s in streams)]
        gaps = np.diff(merged)
        emp = np.mean(gaps > 0.5)
        se = math.sqrt(emp * (1 - emp) / gaps.size)
        assert abs(emp - 0.75) < 3 * se
        pooled = superpose_children(ShiftedExponential(1.0, 1.0), 2)
        for order, model in ((1, pooled.mean), (2, pooled.second_moment)):
            y = gaps**order
            assert abs(y.mean() - model) < 4 * y.std() / math.sqrt(y.size)

    def test_class2_monte_carlo(self, rng):
        child = ExpShiftedMixture(0.3, 2.0, 1.5, 0.8)
        n = 300_000
        d = distribution_stats(child)
        streams = [np.cumsum(d.sample(rng, n)) for _ in range(3)]
        merged = np.sort(np.concatenate(streams))
        merged = merged[merged < min(s[-1] for s in streams)]
        gaps = np.diff(merged)
        pooled = superpose_children(child, 3)
        for t in (0.1, 0.5, 1.0):
            emp = np.mean(gaps > t)
            se = math.sqrt(emp * (1 - emp) / gaps.size)
            assert abs(emp - pooled.survival(t)) < 3.5 * se

    @given(
        st.floats(0.0, 0.95), st.floats(0.1, 10.0), st.floats(0.1, 10.0), st.floats(0.0, 5.0),
        st.integers(1, 8),
    )
    def test_pooled_mean(self, q, lam, gamma, shift, k):
        child = ExpShiftedMixture(q, lam, gamma, shift)
        pooled = superpose_children(child, k)
        assert pooled.mean == pytest.approx(child.mean() / k, rel=1e-9)
        assert pooled.second_moment >= pooled.mean**2 * (1 - 1e-9)

    @given(st.floats(0.1, 10.0), st.floats(0.0, 5.0), st.integers(1, 6),
           st.lists(st.floats(0.0, 20.0), min_size=2, max_size=8))
    def test_survival_shape(self, gamma, shift, k, ts):
        pooled = superpose_children(ShiftedExponential(gamma, shift), k)
        assert pooled.survival(0.0) == pytest.approx(1.0, abs=1e-12)
        s = pooled.survival(np.sort(ts))
        assert np.all(np.diff(s) <= 1e-12)

    def test_invalid_k(self):
        with pytest.raises(DomainError):
            superpose_children(Exponential(1.0), 0)
