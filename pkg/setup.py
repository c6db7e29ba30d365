"""Build the optional Cython kernels.

If Cython or a C compiler is missing the package still installs; the
pure-Python kernels are used instead.
"""
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    import numpy as np
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "rumorlab._kernels",
                ["src/rumorlab/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
