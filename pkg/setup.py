"""Build script: compiles the optional Cython stepping kernel.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); the extension accelerates the per-step trajectory
kernels by roughly an order of magnitude.  To force a rebuild in place:

    python setup.py build_ext --inplace
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "pilotwave._kernels._extcore",
                ["src/pilotwave/_kernels/_extcore.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
