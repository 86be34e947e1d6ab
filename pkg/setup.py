"""Build script for the optional compiled kernels.

The package works without the extension (a NumPy fallback with the same
signatures lives in surfkin._kernels_py); if Cython or a C compiler is
missing the build degrades gracefully to the pure-Python install.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "surfkin._kernels",
                ["src/surfkin/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
