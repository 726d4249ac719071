"""Build script for the optional compiled stepping core.

If Cython or a C compiler is unavailable the package still installs and
falls back to the pure-Python core at import time.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("KDVFEEDBACK_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "kdvfeedback._core",
                    ["src/kdvfeedback/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
