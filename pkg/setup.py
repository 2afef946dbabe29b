"""Build script: compiles the Cython kernels when possible.

The package works without the extension (a pure-Python fallback is selected
at import time), so a failed extension build degrades to a pure install
instead of aborting.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "knotmatch._kernels._speedups",
                ["src/knotmatch/_kernels/_speedups.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(f"knotmatch: skipping Cython extension build ({exc}); "
                     "the pure-Python kernel backend will be used\n")

setup(ext_modules=ext_modules)
