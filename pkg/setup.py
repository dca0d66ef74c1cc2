"""Build script for the optional compiled stencil kernels.

The package is pure Python plus one Cython extension holding the hot
biharmonic-flow loop.  The extension is optional: if Cython or a C
compiler is unavailable the install falls back to the pure NumPy
kernels selected at import time by ``lhsurf._kernels``.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "lhsurf._kernels._native",
                sources=["src/lhsurf/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    )

setup(ext_modules=ext_modules)
