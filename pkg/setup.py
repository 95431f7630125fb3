"""Build script for the optional compiled kernel core.

The package is fully functional without the extension (a pure numpy
fallback is selected at import time); building it just removes the
per-step Python overhead in the long repeated-interaction chains.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [Extension("spinqds.kernels._core", ["src/spinqds/kernels/_core.pyx"])],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions, include_dirs=[np.get_include()])
