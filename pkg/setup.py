"""Build script: compiles the similarity-scan extension when a toolchain is
available, otherwise falls back to a pure wheel (the package selects a numpy
code path at import time).

Compile in place for local testing with:
    python setup.py build_ext --inplace
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "jobrec._ckernels",
                ["src/jobrec/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - toolchain-dependent
    print(f"warning: building without compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
