"""Builds the optional Cython kernel for the block-triangular lifted operator.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so a failed compile is downgraded to a warning.
"""

import warnings

from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "koopman_lab._carleman_cy",
                ["src/koopman_lab/_carleman_cy.pyx"],
                extra_compile_args=["-O3"],
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
except ImportError:
    warnings.warn("Cython not available; building pure-Python koopman-lab")
    extensions = []

setup(ext_modules=extensions)
