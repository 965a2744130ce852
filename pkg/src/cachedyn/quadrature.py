"""Gauss-Legendre helpers used to de-condition over request volumes."""
from functools import lru_cache

from scipy.special import roots_legendre

BASE_NODES = 64
MAX_NODES = 1 << 14


@lru_cache(maxsize=32)
def _legendre(n):
    x, w = roots_legendre(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a, b, n):
    """Nodes and weights of the ``n``-point rule on ``[a, b]``."""
    x, w = _legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w
