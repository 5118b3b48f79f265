"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); building it just makes the hot kernels faster.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "tridentnet._kernels.cykernels",
                sources=["src/tridentnet/_kernels/cykernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # fp-contract off: geometric kernels must match the NumPy
                # backend bit-for-bit, which FMA contraction would break
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": 3},
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    import sys

    print(f"warning: compiled kernels skipped ({exc}); using NumPy fallback",
          file=sys.stderr)

setup(ext_modules=ext_modules)
