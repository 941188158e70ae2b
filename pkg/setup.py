"""Build the optional compiled simulation kernel.

Without Cython, numpy headers or a C compiler the package still installs
and falls back to the numpy kernel at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    pass
else:
    ext_modules = cythonize(
        [
            Extension(
                "dcpension._ckernels",
                ["src/dcpension/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # IEEE semantics are required for bit-identical backends
                extra_compile_args=["-O3", "-fno-fast-math", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
