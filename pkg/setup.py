"""Build script for the optional compiled distance-transform kernel.

The package works without the extension (a pure-numpy fallback is selected
at import time), so any build failure here degrades to the slow path
instead of breaking the install.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "snnf_vo._edt",
                ["src/snnf_vo/_edt.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
