import logging
import math

import numpy as np
import pytest

from cachedyn import (
    LCE,
    LCP,
    LRU,
    QLRU,
    RANDOM,
    ContentClass,
    Degenerate,
    TrafficMix,
    TwoLRU,
    binary_tree,
    distribution_stats,
    onoff_to_renewal,
    pareto_with_mean,
    single_cache,
)
from cachedyn.errors import AmbiguousStrategyError, DomainError, MemoryGuardError, TopologyError
from cachedyn.sim import (
    IndependentOnOff,
    SimConfig,
    SnmRectangular,
    SynchronizedOnOff,
    Workload,
    simulate,
    simulate_many,
)

POP = pareto_with_mean(10, 2)


def mix(leaves=1, catalogue=500, t_on=1.0, t_off=9.0):
    return TrafficMix([ContentClass("a", t_on, t_off, POP, catalogue)], leaves)


class TestConfig:
    def test_default_warmup(self):
        assert SimConfig(horizon=50).warmup == 10

    @pytest.mark.parametrize("kw", [dict(warmup=50), dict(warmup=-1), dict(batches=9)])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            SimConfig(horizon=50, **kw)


class TestSimulate:
    def test_seed_determinism(self):
        topo = binary_tree(3, 30, RANDOM())
        a = simulate(SimConfig(horizon=40, seed=5), topo, mix(4))
        b = simulate(SimConfig(horizon=40, seed=5), topo, mix(4))
        c = simulate(SimConfig(horizon=40, seed=6), topo, mix(4))
        assert np.array_equal(a.batch_phit, b.batch_phit)
        assert a.global_phit == b.global_phit
        assert a.global_phit != c.global_phit

    def test_decision_seed(self):
        topo = binary_tree(3, 30, QLRU(0.3))
        base = simulate(SimConfig(horizon=40, seed=5), topo, mix(4))
        same = simulate(SimConfig(horizon=40, seed=5, decision_seed=5), topo, mix(4))
        other = simulate(SimConfig(horizon=40, seed=5, decision_seed=9), topo, mix(4))
        assert np.array_equal(base.batch_phit, same.batch_phit)
        assert other.ingress_requests == base.ingress_requests
        assert other.global_phit != base.global_phit

    @pytest.mark.parametrize("policy", [LRU(), QLRU(0.3), RANDOM(), TwoLRU()])
    def test_conservation(self, policy):
        res = simulate(SimConfig(horizon=40, seed=1, check_occupancy=True),
                       binary_tree(3, 30, policy), mix(4))
        topo = binary_tree(3, 30, policy)
        for node in topo:
            ns = res.nodes[node.id]
            assert 0 <= ns.hits <= ns.arrivals
            assert ns.occupancy <= 30
            if node.children:
                assert ns.arrivals == sum(res.nodes[c].arrivals - res.nodes[c].hits
                                          for c in node.children)
        assert res.ingress_requests == sum(res.nodes[x].arrivals for x in topo.leaves)
        assert res.root_misses == res.nodes["0"].arrivals - res.nodes["0"].hits

    def test_qlru_one_matches_lru(self):
        cfg = SimConfig(horizon=40, seed=2)
        a, b = simulate_many(cfg, [(binary_tree(2, 40, LRU()), LCE()),
                                   (binary_tree(2, 40, QLRU(1.0)), LCE())], mix(2))
        assert np.array_equal(a.batch_phit, b.batch_phit)

    def test_lcp_matches_qlru_bit_for_bit(self):
        # LCP over LRU draws the same per-node coin as q-LRU under LCE
        cfg = SimConfig(horizon=40, seed=2)
        a, b = simulate_many(cfg, [(binary_tree(2, 40, LRU()), LCP(0.25)),
                                   (binary_tree(2, 40, QLRU(0.25)), LCE())], mix(2))
        assert np.array_equal(a.batch_phit, b.batch_phit)

    def test_lcp_over_qlru_rejected(self):
        with pytest.raises(AmbiguousStrategyError):
            simulate(SimConfig(horizon=10), single_cache(5, QLRU(0.5)), mix(), LCP(0.5))

    def test_compulsory_misses_only(self):
        m = mix(1, 300)
        cfg = SimConfig(horizon=60, warmup=0.0, seed=4, batches=10)
        res = simulate(cfg, single_cache(300, LRU()), m)
        wl = Workload(m, SynchronizedOnOff(), 60, 4)
        batch = 6.0
        distinct = set()
        for j in range(10):
            distinct.update(wl.requests(j * batch, (j + 1) * batch, j)[1].tolist())
        assert res.root_misses == len(distinct)
        assert res.global_phit == pytest.approx(1 - len(distinct) / res.ingress_requests)

    @pytest.mark.filterwarnings("ignore:.*batches received no requests")
    def test_single_content(self):
        m = TrafficMix([ContentClass("a", 1.0, 1.0, Degenerate(20.0), 1)])
        res = simulate(SimConfig(horizon=50, warmup=0.0, seed=3), single_cache(1, LRU()), m)
        assert res.root_misses == 1

    def test_filtered_class_never_hits(self):
        m = TrafficMix([ContentClass("a", 1.0, 9.0, POP, 200),
                        ContentClass("b", 1.0, 9.0, POP, 200)])
        res = simulate(SimConfig(horizon=40, seed=1), single_cache(50, LRU(), ("b",)), m)
        assert res.phit_by_class[1] == 0.0 and res.phit_by_class[0] > 0

    def test_memory_guard(self):
        with pytest.raises(MemoryGuardError):
            simulate(SimConfig(horizon=40, memory_budget=1000), single_cache(10, LRU()), mix())

    def test_leaf_mismatch(self):
        with pytest.raises(TopologyError):
            simulate(SimConfig(horizon=10), binary_tree(2, 5, LRU()), mix(1))

    def test_empty_batches_warn(self):
        m = TrafficMix([ContentClass("a", 0.01, 1000.0, Degenerate(1.0), 1)])
        with pytest.warns(UserWarning, match="no requests"):
            res = simulate(SimConfig(horizon=10, seed=0), single_cache(1, LRU()), m)
        assert math.isinf(res.ci) or math.isnan(res.global_phit) or res.ci >= 0

    def test_confidence_interval(self):
        res = simulate(SimConfig(horizon=60, seed=8), single_cache(50, LRU()), mix())
        assert 0 < res.ci < 0.1
        assert res.batch_phit.size == 30

    def test_batch_logging(self, caplog):
        with caplog.at_level(logging.INFO, logger="cachedyn.sim"):
            simulate(SimConfig(horizon=20, seed=1, batches=10), single_cache(20, LRU()), mix())
        lines = [r.getMessage() for r in caplog.records if r.name == "cachedyn.sim"]
        assert len(lines) == 10 and lines[0].startswith("batch 1/10 t=[")

    def test_backend_reported(self):
        res = simulate(SimConfig(horizon=10), single_cache(20, LRU()), mix())
        assert res.backend in ("compiled", "python")


class TestWorkload:
    def test_poisson_inverse(self):
        from scipy.stats import poisson

        from cachedyn.sim.workload import poisson_inverse

        u = np.random.default_rng(0).random(2000)
        mu = np.geomspace(1e-3, 1e4, 2000)
        assert np.array_equal(poisson_inverse(u, mu), poisson.ppf(u, mu).astype(np.int64))
        assert poisson_inverse(0.5, 3.0).shape == ()

    def test_onoff_gap_law(self):
        """Per-content inter-request gaps follow the two-phase law."""
        lam, t_on, t_off, n = 5.0, 1.0, 9.0, 1000
        m = TrafficMix([ContentClass("a", t_on, t_off, Degenerate(lam * t_on), n)])
        wl = Workload(m, SynchronizedOnOff(), 2000.0, 17)
        _, content, _, _ = wl.requests(0.0, 2000.0, 0)
        order = np.argsort(content, kind="stable")
        times = wl.requests(0.0, 2000.0, 0)[0][order]
        content = content[order]
        same = content[1:] == content[:-1]
        gaps = np.diff(times)[same]
        owner = content[1:][same]
        assert gaps.size > 900_000
        law = distribution_stats(onoff_to_renewal(lam, t_on, t_off))
        groups = owner % 50
        counts = np.bincount(content % 50, minlength=50) / (n / 50 * 2000.0)
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(counts.mean() - 1 / law.mean) < 3 * se
        # gaps straddling the horizon ends are lost, a per-mille bias on the cdf
        for stat, model in (
            (lambda g: (g <= 0.2).astype(float), law.cdf(0.2)),
            (lambda g: (g <= 5.0).astype(float), law.cdf(5.0)),
        ):
            y = stat(gaps)
            per = np.array([y[groups == j].mean() for j in range(50)])
            se = per.std(ddof=1) / math.sqrt(per.size)
            assert abs(y.mean() - model) < 3 * se + 1e-3 * abs(model), (y.mean(), model, se)

    def test_request_rate(self):
        m = mix(1, 2000)
        wl = Workload(m, SynchronizedOnOff(), 500.0, 3)
        got = wl.requests(0.0, 500.0, 0)[1].size
        expect = 2000 * POP.mean() / 10.0 * 500.0
        assert got == pytest.approx(expect, rel=0.05)

    def test_chunks_reproducible(self):
        wl = Workload(mix(4), IndependentOnOff(), 50.0, 3)
        a = wl.requests(10.0, 20.0, 1)
        b = wl.requests(10.0, 20.0, 1)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert np.all(np.diff(a[0]) >= 0)

    def test_synchronized_windows_shared(self):
        m = mix(4, 300)
        sync = Workload(m, SynchronizedOnOff(), 50.0, 3)
        ind = Workload(m, IndependentOnOff(), 50.0, 3)
        assert ind.n_intervals > 3 * sync.n_intervals

    def test_split_routing(self):
        m = mix(4, 2000)
        full = Workload(m, SynchronizedOnOff(), 200.0, 3).requests(0, 200.0, 0)[1].size
        split = Workload(m, SynchronizedOnOff(), 200.0, 3, "split").requests(0, 200.0, 0)[1].size
        assert split == pytest.approx(full / 4, rel=0.05)

    def test_snm_population(self):
        m = mix(1, 1000, t_on=2.0, t_off=18.0)
        wl = Workload(m, SnmRectangular(), 400.0, 9)
        # births on (-t_on, horizon) at rate catalogue / (t_on + t_off)
        expect = 50.0 * 402.0
        assert abs(wl.n_contents - expect) < 4 * math.sqrt(expect)
        t, content, _, _ = wl.requests(0.0, 400.0, 0)
        assert content.max() < wl.n_contents

    def test_snm_explicit_rate_single_class(self):
        two = TrafficMix([ContentClass("a", 1.0, 9.0, POP, 10), ContentClass("b", 1.0, 9.0, POP, 10)])
        with pytest.raises(DomainError):
            Workload(two, SnmRectangular(3.0), 10.0, 0)

    def test_bad_routing(self):
        with pytest.raises(DomainError):
            Workload(mix(), SynchronizedOnOff(), 10.0, 0, "broadcast")
