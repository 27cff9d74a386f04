"""Build script for the optional compiled scoring kernels.

The package is fully functional without the extension: comret._kernels
falls back to a NumPy implementation at import time if the compiled
module is missing or fails to build.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "comret._kernels._fastpath",
                sources=["src/comret/_kernels/_fastpath.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-march=native"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
