"""Build script: compiles the optional Cython kernel core.

If Cython or a C compiler is unavailable the package still installs;
the numpy fallback kernels are selected at import time.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("MISMC_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/mismc/_kernels/_core.pyx"],
            compiler_directives={
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "language_level": 3,
            },
        )
        for ext in ext_modules:
            ext.include_dirs.append(numpy.get_include())
            ext.define_macros.append(("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION"))
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
