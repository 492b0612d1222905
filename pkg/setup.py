"""Build script: compiles the optional Cython kernel.

The package works without the compiled extension (a pure numpy fallback is
selected at import time), so any failure to cythonize or compile downgrades
to a pure-Python install instead of aborting.
"""

from setuptools import Extension, setup


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    try:
        return cythonize(
            [
                Extension(
                    "mptp._kernels._cumprod",
                    ["src/mptp/_kernels/_cumprod.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except Exception:
        return []


setup(ext_modules=extensions())
