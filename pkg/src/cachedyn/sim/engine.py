"""Discrete-event simulation of cache trees.

Requests are served in time order; each walks from its leaf towards the
root until a cache holds the content (or the repository serves it) and
copies are then left on the backward path.  Resolution and insertion are
instantaneous.  The horizon is cut into a warmup followed by equal-time
batches; batch means give Student-t confidence intervals.

Several cache systems can be driven by one request stream
(:func:`simulate_many`), which is how sweeps and paired comparisons share
their workload.

Each finished batch is logged on the ``cachedyn.sim`` logger at INFO level
as ``batch <b>/<B> t=[<t0>,<t1>) requests=<n> hit=<global hit ratio>``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import stats

from ..che import LRU, QLRU, RANDOM, TwoLRU
from ..errors import AmbiguousStrategyError, DomainError, MemoryGuardError, TopologyError
from ..network import LCE, LCP, Topology, single_cache
from ..traffic import ContentClass, Degenerate, TrafficMix
from . import kernel, rng
from .workload import SynchronizedOnOff, Workload

__all__ = ["SimConfig", "SimResult", "NodeStats", "simulate", "simulate_many", "replay_policy_unit"]

log = logging.getLogger("cachedyn.sim")

DEFAULT_MEMORY = 4 << 30
# bytes per generated request while a chunk is being built and sorted
_REQUEST_BYTES = 160


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls.

    ``warmup`` defaults to a fifth of the horizon.  ``memory_budget`` (bytes)
    bounds the cache state plus one chunk of requests.  ``decision_seed``
    seeds the per-node insertion and eviction draws separately from the
    request stream; it defaults to ``seed``.
    """

    horizon: float
    warmup: Optional[float] = None
    seed: int = 0
    batches: int = 30
    mode: object = field(default_factory=SynchronizedOnOff)
    routing: str = "per_leaf"
    memory_budget: int = DEFAULT_MEMORY
    check_occupancy: bool = False
    decision_seed: Optional[int] = None

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", 0.2 * self.horizon)
        if not 0 <= self.warmup < self.horizon:
            raise DomainError("warmup must lie in [0, horizon)")
        if self.batches < 10:
            raise DomainError("at least 10 batches are required")


@dataclass
class NodeStats:
    phit: float
    ci: float
    phit_by_class: list
    arrivals: int
    hits: int
    occupancy: int


@dataclass
class SimResult:
    global_phit: float
    ci: float
    phit_by_class: list
    ci_by_class: list
    nodes: Dict[str, NodeStats]
    ingress_requests: int
    root_misses: int
    batch_phit: np.ndarray = field(repr=False)
    simulated_time: float = 0.0
    backend: str = ""
    class_labels: tuple = ()


def _half_width(samples):
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < 2:
        return math.inf
    return float(stats.t.ppf(0.975, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size))


def _ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1), np.nan)


class _System:
    """Flattened arrays of one cache tree plus its mutable state."""

    def __init__(self, topology: Topology, replication, mix: TrafficMix, n_ids, seed, batches):
        order = topology.order()
        index = {nid: i for i, nid in enumerate(order)}
        n = len(order)
        self.order = order
        self.topology = topology
        self.parent = np.array(
            [index[topology.parent[i]] if i in topology.parent else -1 for i in order], dtype=np.int32
        )
        leaves = topology.leaves
        if len(leaves) != mix.ingress_count:
            raise TopologyError(
                f"topology has {len(leaves)} leaves but the mix declares {mix.ingress_count}"
            )
        height = max(topology.depth(x) for x in leaves) + 1
        if height > kernel.MAX_DEPTH:
            raise TopologyError(f"paths longer than {kernel.MAX_DEPTH} caches are not supported")
        self.leaf_node = np.array([index[x] for x in leaves], dtype=np.int32)
        self.leaf_ids = leaves
        self.root = index[topology.root]
        policy = np.zeros(n, dtype=np.int8)
        cap = np.zeros(n, dtype=np.int64)
        q = np.ones(n)
        admit = np.zeros((n, len(mix.classes)), dtype=np.uint8)
        for i, nid in enumerate(order):
            node = topology.nodes[nid]
            p = node.policy
            if isinstance(p, LRU):
                policy[i] = kernel.LRU_CODE
            elif isinstance(p, QLRU):
                policy[i], q[i] = kernel.QLRU_CODE, p.q
            elif isinstance(p, RANDOM):
                policy[i] = kernel.RANDOM_CODE
            elif isinstance(p, TwoLRU):
                policy[i] = kernel.TWOLRU_CODE
            else:
                raise DomainError(f"node {nid}: unknown policy {p!r}")
            if isinstance(replication, LCP):
                if isinstance(p, QLRU):
                    raise AmbiguousStrategyError(
                        f"node {nid}: q-LRU combined with LCP inserts with two probabilities"
                    )
                q[i] *= replication.q
            cap[i] = int(round(node.capacity))
            for k, c in enumerate(mix.classes):
                admit[i, k] = c.cacheable and c.label not in node.class_filter
        self.policy, self.capacity, self.insert_q, self.admit = policy, cap, q, admit
        n_lists = 2 * n if np.any(policy == kernel.TWOLRU_CODE) else n
        rand_cap = cap[policy == kernel.RANDOM_CODE]
        width = int(rand_cap.max()) if rand_cap.size else 1
        self.prev = np.full((n_lists, n_ids), -1, dtype=np.int32)
        self.nxt = np.full((n_lists, n_ids), -1, dtype=np.int32)
        self.present = np.zeros((n_lists, n_ids), dtype=np.uint8)
        self.head = np.full(n_lists, -1, dtype=np.int64)
        self.tail = np.full(n_lists, -1, dtype=np.int64)
        self.size = np.zeros(n_lists, dtype=np.int64)
        self.slots = np.full((n, max(width, 1)), -1, dtype=np.int32)
        self.rng_state = np.array([rng.node_state(seed, i) for i in range(n)], dtype=np.uint64)
        self.arrivals = np.zeros((n, batches, len(mix.classes)), dtype=np.int64)
        self.hits = np.zeros_like(self.arrivals)

    @staticmethod
    def state_bytes(topology, n_ids):
        n = len(topology)
        lists = 2 * n if any(isinstance(x.policy, TwoLRU) for x in topology) else n
        return lists * n_ids * 9

    def run(self, content, leaf, cls, batch, process):
        process(self.parent, self.leaf_node, self.policy, self.capacity, self.insert_q, self.admit,
                self.prev, self.nxt, self.present, self.head, self.tail, self.size, self.slots,
                self.rng_state, content, leaf, cls, batch, self.arrivals, self.hits)

    def check_occupancy(self):
        n = len(self.order)
        if np.any(self.size[:n] > self.capacity):
            raise AssertionError("cache occupancy exceeds capacity")
        if np.any(self.present[:n].sum(axis=1) != self.size[:n]):
            raise AssertionError("occupancy bookkeeping is inconsistent")

    def result(self, mix, backend, horizon):
        labels = tuple(c.label for c in mix.classes)
        arr, hit = self.arrivals, self.hits
        ingress = arr[self.leaf_node].sum(axis=0)          # (batches, classes)
        root_miss = arr[self.root] - hit[self.root]
        batch_phit = 1.0 - _ratio(root_miss.sum(axis=1), ingress.sum(axis=1))
        empty = int(np.sum(ingress.sum(axis=1) == 0))
        if empty:
            warnings.warn(f"{empty} batches received no requests; the interval is widened", stacklevel=3)
        tot_in = ingress.sum()
        tot_miss = root_miss.sum()
        by_class, ci_class = [], []
        for k in range(len(labels)):
            a = ingress[:, k].sum()
            by_class.append(float(1.0 - root_miss[:, k].sum() / a) if a > 0 else float("nan"))
            ci_class.append(_half_width(1.0 - _ratio(root_miss[:, k], ingress[:, k])))
        nodes = {}
        for i, nid in enumerate(self.order):
            a, h = arr[i].sum(), hit[i].sum()
            nodes[nid] = NodeStats(
                float(h / a) if a > 0 else float("nan"),
                _half_width(_ratio(hit[i].sum(axis=1), arr[i].sum(axis=1))),
                [float(hit[i, :, k].sum() / arr[i, :, k].sum()) if arr[i, :, k].sum() > 0
                 else float("nan") for k in range(len(labels))],
                int(a), int(h), int(self.size[i]),
            )
        return SimResult(
            float(1.0 - tot_miss / tot_in) if tot_in > 0 else float("nan"),
            _half_width(batch_phit), by_class, ci_class, nodes, int(tot_in), int(tot_miss),
            batch_phit, horizon, backend, labels,
        )


def simulate_many(config: SimConfig, systems, mix: TrafficMix, process=None) -> List[SimResult]:
    """Drive several ``(topology, replication)`` systems with one request stream."""
    process = process or kernel.process
    backend = "python" if process is kernel.process_py else (
        "compiled" if process is kernel.process_compiled else "custom")
    wl = Workload(mix, config.mode, config.horizon, config.seed, config.routing)
    n_ids = max(wl.n_contents, 1)
    if n_ids >= 2**31 - 1:
        raise MemoryGuardError("content ids exceed the 32-bit range of the kernel")
    batch_len = (config.horizon - config.warmup) / config.batches
    n_warm = math.ceil(config.warmup / batch_len - 1e-9) if config.warmup > 0 else 0
    edges = [config.warmup * j / n_warm for j in range(n_warm)] if n_warm else []
    edges += [config.warmup + batch_len * j for j in range(config.batches + 1)]
    edges[-1] = config.horizon
    need = sum(_System.state_bytes(t, n_ids) for t, _ in systems)
    need += _REQUEST_BYTES * max(wl.expected_requests(a, b) for a, b in zip(edges[:-1], edges[1:]))
    if need > config.memory_budget:
        raise MemoryGuardError(
            f"estimated {need / 2**20:.0f} MiB exceeds the budget of "
            f"{config.memory_budget / 2**20:.0f} MiB; reduce the catalogue or horizon"
        )
    node_seed = config.seed if config.decision_seed is None else config.decision_seed
    built = [_System(t, r, mix, n_ids, node_seed, config.batches) for t, r in systems]
    for chunk, (t0, t1) in enumerate(zip(edges[:-1], edges[1:])):
        b = chunk - n_warm
        _, content, leaf, cls = wl.requests(t0, t1, chunk)
        batch = np.full(content.size, b if b >= 0 else -1, dtype=np.int32)
        for s in built:
            s.run(content, leaf, cls, batch, process)
            if config.check_occupancy:
                s.check_occupancy()
        if b >= 0 and log.isEnabledFor(logging.INFO):
            s = built[0]
            ing = s.arrivals[s.leaf_node, b].sum()
            miss = (s.arrivals[s.root, b] - s.hits[s.root, b]).sum()
            hit = 1.0 - miss / ing if ing else float("nan")
            log.info("batch %d/%d t=[%.6g,%.6g) requests=%d hit=%.6f",
                     b + 1, config.batches, t0, t1, content.size, hit)
    return [s.result(mix, backend, config.horizon) for s in built]


def simulate(config: SimConfig, topology: Topology, mix: TrafficMix, replication=LCE(),
             process=None) -> SimResult:
    """Simulate one cache tree; deterministic given ``config.seed``."""
    return simulate_many(config, [(topology, replication)], mix, process)[0]


def replay_policy_unit(policy, capacity, trace, seed=0, process=None):
    """Hit (True) / miss (False) outcome of each request of ``trace`` at one cache."""
    process = process or kernel.process
    ids, content = np.unique(np.asarray(list(trace)), return_inverse=True)
    mix = TrafficMix([ContentClass("trace", 1.0, 0.0, Degenerate(1.0), max(ids.size, 1))])
    s = _System(single_cache(capacity, policy), LCE(), mix, max(ids.size, 1), seed, 1)
    zero32 = np.zeros(1, dtype=np.int32)
    out = np.zeros(content.size, dtype=bool)
    for i, x in enumerate(content.astype(np.int64)):
        before = s.hits[0, 0, 0]
        s.run(np.array([x], dtype=np.int64), zero32, zero32, zero32, process)
        out[i] = s.hits[0, 0, 0] > before
    return out
