"""Build script for the compiled kernel extension.

python setup.py build_ext --inplace
"""

import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

directives = {
    "language_level": "3",
    "boundscheck": False,
    "wraparound": False,
    "cdivision": True,
    "initializedcheck": False,
}

# -ffp-contract=off keeps the distance comparisons in the neighbor scan
# bit-identical to the numpy reference (no FMA contraction).
extensions = [
    Extension(
        "vecchiagp.engine._kernels",
        ["src/vecchiagp/engine/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-fopenmp", "-ffp-contract=off"],
        extra_link_args=["-fopenmp"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    ),
]

setup(ext_modules=cythonize(extensions, compiler_directives=directives))
