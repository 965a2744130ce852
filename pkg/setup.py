"""Build the compiled simulator kernel when Cython is available.

Without Cython the package installs without the extension and the
simulator falls back to its pure-Python kernel.
"""
from setuptools import setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        ["src/cachedyn/sim/_kernel.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
