"""Build the optional Cython kernel extension.

If Cython is unavailable, or ``SEPDEMIX_NO_EXT`` is set, the package still
installs and falls back to the pure-numpy kernels at import time. The
extension links BLAS through ``scipy.linalg.cython_blas``.
"""
import os
import sys

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("SEPDEMIX_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "sepdemix._kernels",
                    ["src/sepdemix/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # limited-range complex arithmetic keeps multiplies inline
                    extra_compile_args=[] if sys.platform == "win32" else ["-O3", "-fcx-limited-range"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
