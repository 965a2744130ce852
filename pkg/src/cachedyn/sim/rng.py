"""Counter-based random numbers built on the splitmix64 finaliser.

Every random quantity of a simulation is a pure function of the seed and a
tuple of integer keys, ``uniform(seed, stream, *keys)``.  Keys identify the
content, the leaf, the ON interval and the position inside it, so adding a
content or changing the chunking never shifts another content's draws.

Stream numbers used by the workload generator:

====  ============================================
1     ON/OFF modulator durations and initial state
2     request counts per ON-interval piece
3     request instants inside a piece
4     request volume of each content
5     shot arrivals of the shot-noise workload
6     per-node cache decisions (eviction, insertion)
====  ============================================

Cache decisions use the same finaliser as a sequential generator: the
state advances by the golden-ratio increment and each output is the
finalised state (plain splitmix64).
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = 1.0 / 9007199254740992.0

STREAM_MODULATOR = 1
STREAM_COUNT = 2
STREAM_TIME = 3
STREAM_VOLUME = 4
STREAM_SHOT = 5
STREAM_NODE = 6

MASK64 = (1 << 64) - 1


def mix64(z):
    """splitmix64 finaliser on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def hash_keys(seed, stream, *keys):
    """Combine integer keys into a 64-bit hash (broadcasting over arrays)."""
    h = mix64(np.uint64(seed & MASK64) ^ mix64(np.uint64(stream)))
    with np.errstate(over="ignore"):
        for k in keys:
            k = np.asarray(k).astype(np.uint64)
            h = mix64(h + GOLDEN + k)
    return h


def to_unit(h):
    """Map 64-bit hashes to doubles in the open interval (0, 1)."""
    return ((h >> _S11).astype(np.float64) + 0.5) * _TWO53


def uniform(seed, stream, *keys):
    return to_unit(hash_keys(seed, stream, *keys))


def node_state(seed, node):
    """Initial sequential state of a cache's decision generator."""
    return int(hash_keys(seed, STREAM_NODE, node))


def splitmix_next(state):
    """Pure-Python sequential step; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)
