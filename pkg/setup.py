"""Builds the optional compiled kernel core.

If Cython or a C compiler is unavailable the package still installs; the
numpy fallback backend is selected at import time instead.
"""

import numpy as np
from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "racebench.kernels._core",
                ["src/racebench/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                # -ffp-contract=off keeps float results bit-identical with
                # the numpy backend (no FMA contraction).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
