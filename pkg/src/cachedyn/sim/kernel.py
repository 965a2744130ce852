"""Selects the request kernel at import time.

The compiled kernel is used when it was built; setting ``CACHEDYN_PURE=1``
forces the pure-Python twin.  ``BACKEND`` names the active one.
"""
import os

from . import _kernel_py
from ._kernel_py import LRU_CODE, QLRU_CODE, RANDOM_CODE, TWOLRU_CODE

MAX_DEPTH = 64

process_py = _kernel_py.process

try:
    from ._kernel import process as process_compiled
except ImportError:
    process_compiled = None

if process_compiled is not None and os.environ.get("CACHEDYN_PURE", "") not in ("1", "true"):
    process = process_compiled
    BACKEND = "compiled"
else:
    process = process_py
    BACKEND = "python"

__all__ = [
    "process",
    "process_py",
    "process_compiled",
    "BACKEND",
    "MAX_DEPTH",
    "LRU_CODE",
    "QLRU_CODE",
    "RANDOM_CODE",
    "TWOLRU_CODE",
]
