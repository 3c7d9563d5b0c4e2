"""Builds the optional Cython kernel; the package still works without it."""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("specrg._core", ["src/specrg/_core.pyx"], include_dirs=[np.get_include()])],
        compiler_directives={"language_level": 3},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
