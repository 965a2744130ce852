"""Hit probabilities of caches and cache trees under dynamic content popularity.

The analytic engine summarises each cache by an eviction time and follows
request and miss streams through a tree as two-phase renewal processes;
the discrete-event simulator in :mod:`cachedyn.sim` serves as its oracle.
"""
from .che import (
    LRU,
    QLRU,
    RANDOM,
    TwoLRU,
    Deterministic,
    ExponentialMean,
    expected_occupancy,
    hit_2lru,
    hit_lru,
    hit_qlru,
    hit_random,
    solve_eviction_time,
)
from .errors import CacheModelError
from .miss_stream import fit_class1, fit_class2, short_miss_moments, superpose_children
from .network import (
    LCE,
    LCP,
    CacheNode,
    Topology,
    binary_tree,
    expected_copies_per_route,
    normalize_strategy,
    single_cache,
    solve_network,
)
from .traffic import (
    ContentClass,
    Degenerate,
    Pareto,
    TrafficMix,
    Zipf,
    distribution_stats,
    onoff_to_renewal,
    pareto_with_mean,
    snm_equivalent_catalogue,
)

__version__ = "0.1.0"

__all__ = [
    "LRU", "QLRU", "RANDOM", "TwoLRU", "Deterministic", "ExponentialMean",
    "expected_occupancy", "hit_2lru", "hit_lru", "hit_qlru", "hit_random",
    "solve_eviction_time", "CacheModelError", "fit_class1", "fit_class2",
    "short_miss_moments", "superpose_children", "LCE", "LCP", "CacheNode", "Topology",
    "binary_tree", "expected_copies_per_route", "normalize_strategy", "single_cache",
    "solve_network", "ContentClass", "Degenerate", "Pareto", "TrafficMix", "Zipf",
    "distribution_stats", "onoff_to_renewal", "pareto_with_mean", "snm_equivalent_catalogue",
]
