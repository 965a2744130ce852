import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachedyn import (
    LCE,
    LCP,
    LRU,
    QLRU,
    RANDOM,
    CacheNode,
    ContentClass,
    Topology,
    TrafficMix,
    TwoLRU,
    binary_tree,
    expected_copies_per_route,
    normalize_strategy,
    pareto_with_mean,
    single_cache,
    solve_eviction_time,
    solve_network,
)
from cachedyn.errors import AmbiguousStrategyError, TopologyError, UnsupportedPolicyError

POP = pareto_with_mean(10, 2)


def mix(leaves=1, catalogue=1e4, t_on=7.0, t_off=63.0, extra=()):
    classes = [ContentClass("a", t_on, t_off, POP, catalogue)] + list(extra)
    return TrafficMix(classes, leaves)


class TestNormalizeStrategy:
    def test_lcp_over_lru(self):
        pol, rep = normalize_strategy(LRU(), LCP(0.25))
        assert pol == QLRU(0.25) and isinstance(rep, LCE)

    @pytest.mark.parametrize("policy", [LRU(), RANDOM()])
    def test_lce_unchanged(self, policy):
        assert normalize_strategy(policy, LCE()) == (policy, LCE())

    def test_double_probability(self):
        with pytest.raises(AmbiguousStrategyError):
            normalize_strategy(QLRU(0.5), LCP(0.5))


class TestSolveNetwork:
    @pytest.mark.parametrize("policy", [LRU(), QLRU(0.2), RANDOM(), TwoLRU()])
    def test_single_node_is_single_cache(self, policy):
        m = mix()
        net = solve_network(single_cache(300, policy), m)
        alone = solve_eviction_time(policy, m, 300, n_nodes=256)
        assert net.global_phit == pytest.approx(alone.phit_overall, rel=1e-12)

    def test_passthrough_parent(self):
        m = mix(2)
        leaf = LRU()
        topo = Topology([
            CacheNode("r", 0, leaf, ("x", "y")),
            CacheNode("x", 200, leaf),
            CacheNode("y", 200, leaf),
        ])
        sol = solve_network(topo, m)
        assert sol.global_phit == pytest.approx(sol.nodes["x"].phit, rel=1e-12)
        assert sol.nodes["r"].phit == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("policy", [LRU(), QLRU(0.25), RANDOM()])
    def test_flow_conservation_and_symmetry(self, policy):
        m = mix(8, 1e4)
        sol = solve_network(binary_tree(4, 100, policy), m)
        topo = sol.topology
        for node in topo:
            ns = sol.nodes[node.id]
            assert ns.miss_rate == pytest.approx(ns.arrival_rate * (1 - ns.phit), rel=1e-9)
            if node.children:
                inflow = sum(sol.nodes[c].miss_rate for c in node.children)
                assert ns.arrival_rate == pytest.approx(inflow, rel=1e-9)
        by_depth = {}
        for ns in sol.nodes.values():
            by_depth.setdefault(ns.depth, set()).add(ns.phit)
        assert all(len(v) == 1 for v in by_depth.values())
        leaf_best = max(sol.nodes[x].phit for x in topo.leaves)
        assert leaf_best <= sol.global_phit <= 1.0
        assert sol.global_phit == pytest.approx(1 - sol.root_miss_rate / sol.total_ingress_rate)

    @settings(max_examples=10)
    @given(st.sampled_from([LRU(), QLRU(0.25), RANDOM()]), st.integers(1, 4),
           st.floats(5.0, 3000.0), st.sampled_from(["equal", "sum_children"]))
    def test_global_phit_bounds(self, policy, layers, cap, sizing):
        m = mix(1 << (layers - 1), 2e4)
        sol = solve_network(binary_tree(layers, cap, policy, sizing), m, n_nodes=64)
        leaf_best = max(sol.nodes[x].phit for x in sol.topology.leaves)
        assert leaf_best - 1e-12 <= sol.global_phit <= 1.0
        for ns in sol.nodes.values():
            assert ns.arrival_rate >= 0 and ns.miss_rate >= 0
            assert abs(ns.occupancy_residual) <= 1e-6 or ns.saturated

    def test_empty_class_filter_changes_nothing(self):
        ghost = ContentClass("z", 7.0, 63.0, POP, 0)
        m = mix(4, 1e4, extra=[ghost])
        a = solve_network(binary_tree(3, 100, LRU()), m)
        b = solve_network(binary_tree(3, 100, LRU(), class_filter=("z",)), m)
        assert a.global_phit == b.global_phit
        assert [n.phit for n in a.nodes.values()] == [n.phit for n in b.nodes.values()]

    def test_filtered_class_bypasses(self):
        other = ContentClass("b", 7.0, 63.0, POP, 1e4)
        m = mix(1, 1e4, extra=[other])
        sol = solve_network(single_cache(300, LRU(), ("b",)), m)
        assert sol.global_phit_by_class[1] == 0.0
        assert sol.global_phit_by_class[0] > 0.0

    def test_leaf_count_mismatch(self):
        with pytest.raises(TopologyError):
            solve_network(binary_tree(3, 100, LRU()), mix(2))

    def test_heterogeneous_siblings(self):
        topo = Topology([
            CacheNode("r", 100, LRU(), ("x", "y")),
            CacheNode("x", 100, LRU()),
            CacheNode("y", 200, LRU()),
        ])
        with pytest.raises(TopologyError, match="simulator"):
            solve_network(topo, mix(2))

    def test_lcp_over_random_unsupported(self):
        with pytest.raises(UnsupportedPolicyError):
            solve_network(binary_tree(2, 100, RANDOM()), mix(2), LCP(0.5))

    def test_lcp_equals_qlru(self):
        m = mix(8)
        a = solve_network(binary_tree(4, 100, LRU()), m, LCP(0.25))
        b = solve_network(binary_tree(4, 100, QLRU(0.25)), m)
        assert a.global_phit == b.global_phit

    def test_split_routing_lowers_leaf_load(self):
        m = mix(8)
        per_leaf = solve_network(binary_tree(4, 100, LRU()), m)
        split = solve_network(binary_tree(4, 100, LRU()), m, routing="split")
        leaf = per_leaf.topology.leaves[0]
        assert split.nodes[leaf].arrival_rate == pytest.approx(per_leaf.nodes[leaf].arrival_rate / 8)


class TestCopies:
    def _solve(self, layers, policy, replication):
        return solve_network(binary_tree(layers, 100, policy), mix(1 << (layers - 1)), replication)

    def test_lcp_quarter_four_layers(self):
        rep = expected_copies_per_route(self._solve(4, LRU(), LCP(0.25)), LCP(0.25))
        assert rep.all_miss == pytest.approx(1.0, rel=1e-15)
        assert rep.path_length == 4

    def test_lce_four_layers(self):
        assert expected_copies_per_route(self._solve(4, LRU(), LCE()), LCE()).all_miss == 4.0

    def test_lcp_half_two_layers(self):
        rep = expected_copies_per_route(self._solve(2, LRU(), LCP(0.5)), LCP(0.5))
        assert rep.all_miss == pytest.approx(1.0)

    def test_per_class_bounded(self):
        rep = expected_copies_per_route(self._solve(4, LRU(), LCP(0.25)), LCP(0.25))
        assert 0.0 < rep.per_class[0] <= 1.0
        assert not math.isnan(rep.per_class[0])
