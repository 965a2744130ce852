"""Bottom-up analysis of tree cache networks.

Leaves see the ON-OFF request law of every content; each cache solves its
own eviction-time fixed point, turns its miss stream into a new ON-OFF law,
and a parent pools the identical miss streams of its children during the ON
windows they share.  Identical subtrees are solved once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional, Tuple, Union

import numpy as np

from .che import (
    LRU,
    QLRU,
    RANDOM,
    TwoLRU,
    Demand,
    leaf_demand,
    solve_demand,
)
from .errors import (
    AmbiguousStrategyError,
    CacheModelError,
    DomainError,
    TopologyError,
    UnsupportedPolicyError,
)
from .miss_stream import (
    fit_class1_arrays,
    fit_class2_arrays,
    miss_moments_arrays,
    on_miss_rate,
    pooled_moments_arrays,
)
from .mixture import ExpMixture, PooledMixture
from .traffic import TrafficMix

__all__ = [
    "LCE",
    "LCP",
    "ReplicationStrategy",
    "CacheNode",
    "Topology",
    "single_cache",
    "binary_tree",
    "normalize_strategy",
    "NodeSolution",
    "NetworkSolution",
    "solve_network",
    "CopiesReport",
    "expected_copies_per_route",
]

DEFAULT_NODES = 256


@dataclass(frozen=True)
class LCE:
    name = "LCE"


@dataclass(frozen=True)
class LCP:
    q: float

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise DomainError(f"q must lie in (0, 1], got {self.q}")

    @property
    def name(self):
        return f"LCP({self.q:g})"


ReplicationStrategy = Union[LCE, LCP]


@dataclass(frozen=True)
class CacheNode:
    id: str
    capacity: float
    policy: object
    children: Tuple[str, ...] = ()
    class_filter: FrozenSet[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "class_filter", frozenset(self.class_filter))
        if self.capacity < 0:
            raise TopologyError(f"node {self.id}: negative capacity")


class Topology:
    """Rooted tree of caches; leaves are the ingress points."""

    def __init__(self, nodes):
        self.nodes: Dict[str, CacheNode] = {n.id: n for n in nodes}
        if len(self.nodes) != len(nodes):
            raise TopologyError("duplicate node ids")
        parent = {}
        for n in nodes:
            for c in n.children:
                if c not in self.nodes:
                    raise TopologyError(f"node {n.id}: unknown child {c}")
                if c in parent:
                    raise TopologyError(f"node {c} has two parents")
                parent[c] = n.id
        roots = [i for i in self.nodes if i not in parent]
        if len(roots) != 1:
            raise TopologyError(f"expected a single root, found {len(roots)}")
        self.root = roots[0]
        self.parent = parent
        seen = set()
        stack = [self.root]
        while stack:
            i = stack.pop()
            if i in seen:
                raise TopologyError("cycle detected")
            seen.add(i)
            stack.extend(self.nodes[i].children)
        if len(seen) != len(self.nodes):
            raise TopologyError("topology is not connected")

    def __iter__(self):
        return iter(self.nodes.values())

    def __len__(self):
        return len(self.nodes)

    @property
    def leaves(self):
        return [i for i in self.order() if not self.nodes[i].children]

    def order(self):
        """Node ids, root first, children in declaration order."""
        out, stack = [], [self.root]
        while stack:
            i = stack.pop()
            out.append(i)
            stack.extend(reversed(self.nodes[i].children))
        return out

    def path_to_root(self, node_id):
        path = [node_id]
        while path[-1] in self.parent:
            path.append(self.parent[path[-1]])
        return path

    def depth(self, node_id):
        return len(self.path_to_root(node_id)) - 1

    def leaves_below(self, node_id):
        n = self.nodes[node_id]
        if not n.children:
            return 1
        return sum(self.leaves_below(c) for c in n.children)

    def with_policies(self, policies):
        return Topology(
            [
                CacheNode(n.id, n.capacity, policies[n.id], n.children, n.class_filter)
                for n in self.nodes.values()
            ]
        )


def single_cache(capacity, policy, class_filter=()):
    return Topology([CacheNode("0", capacity, policy, (), frozenset(class_filter))])


def binary_tree(layers, leaf_capacity, policy, sizing="equal", class_filter=()):
    """Complete binary tree; ``sizing='sum_children'`` doubles capacity per layer up."""
    if layers < 1:
        raise TopologyError("need at least one layer")
    if sizing not in ("equal", "sum_children"):
        raise TopologyError(f"unknown sizing {sizing!r}")
    nodes = []
    for level in range(layers):
        count = 1 << level
        cap = leaf_capacity if sizing == "equal" else leaf_capacity * (1 << (layers - 1 - level))
        for j in range(count):
            idx = count - 1 + j
            kids = () if level == layers - 1 else (str(2 * idx + 1), str(2 * idx + 2))
            nodes.append(CacheNode(str(idx), cap, policy, kids, frozenset(class_filter)))
    return Topology(nodes)


def normalize_strategy(policy, replication):
    """Fold probabilistic replication into the per-cache policy.

    LCP with probability ``q`` over LRU caches behaves as q-LRU with
    leave-copy-everywhere.
    """
    if isinstance(replication, LCP):
        if isinstance(policy, LRU):
            return QLRU(replication.q), LCE()
        if isinstance(policy, QLRU):
            raise AmbiguousStrategyError("q-LRU combined with LCP inserts with two probabilities")
    return policy, replication


# ---------------------------------------------------------------------------
# per-node bookkeeping


@dataclass
class _Input:
    """Request law offered to a node, per representative content."""

    short_w: np.ndarray
    short_lam: np.ndarray
    short_gamma: np.ndarray
    short_shift: np.ndarray
    p_short: np.ndarray
    mean_rate: np.ndarray
    mu_on: np.ndarray
    # children's short laws (w, lam, gamma, shift) and their count, for the
    # exact pooled law seen by the cache itself
    pooled_from: Optional[tuple] = None
    k: int = 1

    def short_law(self):
        return ExpMixture(
            np.c_[self.short_w, 1.0 - self.short_w],
            np.c_[self.short_lam, self.short_gamma],
            np.c_[np.zeros_like(self.short_shift), self.short_shift],
        )

    def full_law(self, irm):
        """Two-phase law offered to the cache; the long mean closes the rate balance."""
        s = self.short_law()
        p = np.where(irm, 1.0, self.p_short)
        live = self.mean_rate > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            long_mean = (1.0 / self.mean_rate - p * s.mean()) / (1.0 - p)
        long_rate = np.where(live & (p < 1.0), 1.0 / long_mean, 1.0)
        if self.pooled_from is not None and self.k > 1:
            return PooledMixture(p, *self.pooled_from, self.k, long_rate)
        return ExpMixture(
            np.hstack([p[:, None] * s.w, (1.0 - p)[:, None]]),
            np.hstack([s.r, long_rate[:, None]]),
            np.hstack([s.d, np.zeros((len(p), 1))]),
        )


@dataclass
class NodeSolution:
    id: str
    depth: int
    policy: object
    capacity: float
    eviction: object
    phit: float
    phit_by_class: list
    arrival_rate: float
    miss_rate: float
    arrival_by_class: list
    miss_by_class: list
    occupancy_residual: float
    saturated: bool = False
    p_hit: np.ndarray = field(default=None, repr=False)
    p_insert: np.ndarray = field(default=None, repr=False)


@dataclass
class NetworkSolution:
    nodes: Dict[str, NodeSolution]
    global_phit: float
    global_phit_by_class: list
    total_ingress_rate: float
    root_miss_rate: float
    topology: Topology = field(repr=False)
    replication: object = None
    class_labels: tuple = ()


def _signature(topo, node_id):
    n = topo.nodes[node_id]
    kids = tuple(_signature(topo, c) for c in n.children)
    return (n.capacity, n.policy, n.class_filter, kids)


def _leaf_input(demand: Demand):
    law = demand.law
    irm = demand.t_off == 0
    lam = law.r[:, 0]
    p = np.where(irm, 1.0, law.w[:, 0])
    one = np.ones_like(lam)
    mu_on = demand.rate * (demand.t_on + demand.t_off) / demand.t_on
    return _Input(one, lam, lam, np.zeros_like(lam), p, demand.rate.copy(), mu_on)


def _with_context(err, node_id):
    msg = f"node {node_id}: {err}"
    try:
        new = type(err)(msg)
    except TypeError:
        new = CacheModelError(msg)
    return new


def _miss_input(policy, inp: _Input, irm, t_on, t_off, eviction, p_hit, passthrough):
    """Fitted two-phase miss law of one node."""
    short = inp.short_law()
    w = inp.short_w.copy()
    lam = inp.short_lam.copy()
    gamma = inp.short_gamma.copy()
    shift = inp.short_shift.copy()
    work = ~passthrough & (inp.mean_rate > 0) & (p_hit < 1.0)
    if np.any(work):
        sub = short[np.flatnonzero(work)]
        ev = eviction
        m1, m2 = miss_moments_arrays(policy, sub, ev)
        # Within-ON gaps longer than the ON-period miss spacing 1/mu would
        # make the rate balance demand a negative long phase; such laws are
        # rescaled to mean 1/mu with unchanged coefficient of variation.
        mu_sub = on_miss_rate(inp.mean_rate, p_hit, t_on, t_off)[work]
        onoff = ~irm[work]
        lost = ~(np.isfinite(m1) & np.isfinite(m2))
        m1 = np.where(lost, np.where(onoff, 1.0 / mu_sub, 1.0), m1)
        m2 = np.where(lost, 2.0 * m1 * m1, m2)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(onoff, np.minimum(1.0, 1.0 / (mu_sub * m1)), 1.0)
        m1, m2 = m1 * c, m2 * c * c
        g1, s1, _ = fit_class1_arrays(m1, m2)
        nw = np.zeros_like(m1)
        nl = 1.0 / sub.mean()
        if isinstance(policy, QLRU) and policy.q < 1.0:
            wq = np.full_like(m1, 1.0 - policy.q)
            g2, s2, _, ok = fit_class2_arrays(m1, m2, wq, nl)
            g1 = np.where(ok, g2, g1)
            s1 = np.where(ok, s2, s1)
            nw = np.where(ok, wq, 0.0)
        w[work], lam[work], gamma[work], shift[work] = nw, nl, g1, s1
    miss_rate = inp.mean_rate * (1.0 - p_hit)
    mu = np.where(irm, 0.0, on_miss_rate(inp.mean_rate, p_hit, t_on, np.where(irm, 0.0, t_off)))
    return _Input(w, lam, gamma, shift, np.zeros_like(w), miss_rate, mu)


def _pool(child: _Input, k, irm, t_on):
    """Input law of a parent with ``k`` identical children."""
    w, lam, gamma, shift = child.short_w, child.short_lam, child.short_gamma, child.short_shift
    if k > 1:
        m1, m2 = pooled_moments_arrays(w, lam, gamma, shift, k)
        g1, s1, _ = fit_class1_arrays(m1, m2)
        nw = np.zeros_like(w)
        nl = k * lam
        mixed = (w > 0) & (w < 1)
        if np.any(mixed):
            g2, s2, _, ok = fit_class2_arrays(m1, m2, np.where(mixed, w, 0.5), nl)
            use = mixed & ok
            g1 = np.where(use, g2, g1)
            s1 = np.where(use, s2, s1)
            nw = np.where(use, w, 0.0)
        pure = w == 1.0
        w = np.where(pure, 1.0, nw)
        lam = np.where(pure, k * lam, nl)
        gamma = np.where(pure, k * lam, g1)
        shift = np.where(pure, 0.0, s1)
    mean_rate = k * child.mean_rate
    mu = k * child.mu_on
    x = mu * t_on
    p = np.where(irm, 1.0, x / (x + 1.0))
    return _Input(w, lam, gamma, shift, p, mean_rate, mu,
                  (child.short_w, child.short_lam, child.short_gamma, child.short_shift), k)


def _node_totals(demand, p_hit):
    flow = demand.rate_w * demand.rate
    arr = [float(flow[demand.cls == k].sum()) for k in range(demand.n_classes)]
    miss = [float((flow * (1.0 - p_hit))[demand.cls == k].sum()) for k in range(demand.n_classes)]
    return arr, miss


def solve_network(topology: Topology, mix: TrafficMix, replication=LCE(), routing="per_leaf",
                  n_nodes=DEFAULT_NODES):
    """Analytic hit probabilities of every cache in a tree.

    ``routing='per_leaf'`` offers every content at rate ``V / t_on`` at each
    leaf during its (shared) ON periods; ``'split'`` divides that rate
    evenly among the leaves.
    """
    policies = {}
    for n in topology:
        pol, rep = normalize_strategy(n.policy, replication)
        if isinstance(rep, LCP):
            raise UnsupportedPolicyError(
                f"node {n.id}: LCP over {type(n.policy).__name__} has no analytic model"
            )
        policies[n.id] = pol
    topo = topology.with_policies(policies)
    leaves = topo.leaves
    if len(leaves) != mix.ingress_count:
        raise TopologyError(
            f"topology has {len(leaves)} leaves but the mix declares {mix.ingress_count} ingress caches"
        )
    if routing not in ("per_leaf", "split"):
        raise DomainError(f"unknown routing {routing!r}")
    rate_scale = 1.0 / len(leaves) if routing == "split" else 1.0
    base = leaf_demand(mix, n_nodes, rate_scale)
    irm = base.t_off == 0
    labels = tuple(c.label for c in mix.classes)
    cacheable = np.array([mix.classes[k].cacheable for k in base.cls])

    memo = {}
    solutions = {}

    def run(node_id, is_root):
        node = topo.nodes[node_id]
        key = (_signature(topo, node_id), is_root)
        if node.children:
            sigs = {_signature(topo, c) for c in node.children}
            if len(sigs) != 1:
                raise TopologyError(
                    f"node {node_id}: children differ; heterogeneous siblings need the simulator"
                )
            child_out = None
            for c in node.children:
                child_out = run(c, False)
            inp = _pool(child_out, len(node.children), irm, base.t_on)
        else:
            inp = _leaf_input(base)
        if key in memo and not is_root:
            res, out = memo[key]
        else:
            res, out = None, None
        filt = np.array([labels[k] in node.class_filter for k in base.cls])
        admitted = cacheable & ~filt & (inp.mean_rate > 0)
        law = base.law if not node.children else inp.full_law(irm)
        demand = Demand(law, inp.mean_rate, base.count_w, base.rate_w, base.cls,
                        admitted, base.n_classes, base.t_on, base.t_off)
        policy = policies[node_id]
        if res is None:
            try:
                res = solve_demand(policy, demand, node.capacity)
                out = None
                if not is_root:
                    passthrough = ~admitted | (node.capacity == 0)
                    out = _miss_input(policy, inp, irm, base.t_on, base.t_off, res.eviction,
                                      res.p_hit, passthrough)
            except CacheModelError as e:
                raise _with_context(e, node_id) from e
            memo[key] = (res, out)
        arr, miss = _node_totals(demand, res.p_hit)
        tot_arr = sum(arr)
        p_ins = _insert_prob(policy, demand, res)
        solutions[node_id] = NodeSolution(
            node_id, topo.depth(node_id), policy, node.capacity, res.eviction,
            1.0 - sum(miss) / tot_arr if tot_arr > 0 else float("nan"),
            [1.0 - m / a if a > 0 else float("nan") for a, m in zip(arr, miss)],
            tot_arr, sum(miss), arr, miss, res.occupancy_residual, res.saturated,
            res.p_hit, p_ins,
        )
        return out

    run(topo.root, True)
    root = solutions[topo.root]
    ingress_by_class = [0.0] * len(labels)
    for leaf in leaves:
        for k, a in enumerate(solutions[leaf].arrival_by_class):
            ingress_by_class[k] += a
    total = sum(ingress_by_class)
    by_class = [
        1.0 - m / a if a > 0 else float("nan") for a, m in zip(ingress_by_class, root.miss_by_class)
    ]
    return NetworkSolution(
        solutions, 1.0 - root.miss_rate / total, by_class, total, root.miss_rate, topo,
        replication, labels,
    )


def _insert_prob(policy, demand, res):
    """Probability that a miss leaves a copy at this cache."""
    n = len(demand.law)
    if isinstance(policy, QLRU):
        p = np.full(n, policy.q)
    elif isinstance(policy, TwoLRU):
        t1 = res.eviction.t_c_virtual
        p = demand.law.cdf(t1 if t1 is not None else 0.0)
    else:
        p = np.ones(n)
    return np.where(demand.admitted, p, 0.0)


@dataclass
class CopiesReport:
    path_length: int
    all_miss: float
    per_class: list


def expected_copies_per_route(solution: NetworkSolution, replication=None, leaf=None):
    """Expected number of copies left on a leaf-to-root path.

    ``all_miss`` counts the copies left by a request that misses every cache
    on the path; ``per_class`` is the expected number of copies created per
    ingress request of each class.
    """
    topo = solution.topology
    leaf = leaf if leaf is not None else topo.leaves[0]
    path = topo.path_to_root(leaf)
    all_miss = 0.0
    for nid in path:
        pol = solution.nodes[nid].policy
        if topo.nodes[nid].capacity == 0:
            continue
        if isinstance(pol, QLRU):
            all_miss += pol.q
        elif isinstance(replication, LCP) and isinstance(pol, (LRU, RANDOM)):
            all_miss += replication.q
        else:
            all_miss += 1.0
    per_class = []
    leaf_sol = solution.nodes[leaf]
    for k in range(len(solution.class_labels)):
        ingress = leaf_sol.arrival_by_class[k]
        if ingress <= 0:
            per_class.append(float("nan"))
            continue
        copies = 0.0
        for nid in path:
            ns = solution.nodes[nid]
            share = topo.leaves_below(nid)
            miss_frac = ns.miss_by_class[k] / share / ingress
            arr = ns.arrival_by_class[k]
            # insertion probability averaged over the misses of this class
            ins = 0.0 if arr <= 0 or ns.miss_by_class[k] <= 0 else _avg_insert(ns, k, solution)
            copies += miss_frac * ins
        per_class.append(copies)
    return CopiesReport(len(path), all_miss, per_class)


def _avg_insert(ns, k, solution):
    if ns.p_insert is None:
        return 1.0
    p = ns.p_insert
    if isinstance(ns.policy, QLRU):
        return float(ns.policy.q) if np.any(p > 0) else 0.0
    return float(np.mean(p[p > 0])) if np.any(p > 0) else 0.0
