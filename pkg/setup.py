"""Build script: compiles the optional Cython convolution kernels.

Set GARMENTGAN_PURE_PY=1 to skip the extension entirely; the package then
runs on the pure-NumPy kernel fallback.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("GARMENTGAN_PURE_PY") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "garmentgan.backend._kernels",
                    ["src/garmentgan/backend/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
