"""Builds the optional compiled search kernel; the package works without it."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("KERNELBOUNDS_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/kernelbounds/_search_ext.pyx"],
            compiler_directives={"language_level": 3},
            quiet=True,
        )
        for ext in ext_modules:
            ext.extra_compile_args = ["-O3"]
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
