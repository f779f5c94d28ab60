"""Build script: compiles the optional Cython pair kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import time); building it just makes the mining/backward inner
loop faster.  `HDC_SKIP_EXT=1 pip install .` forces a pure-Python install.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("HDC_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "hdc._kernels._pairs",
                    ["src/hdc/_kernels/_pairs.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
