"""Build script for the optional compiled kernel extension.

The package works without the extension: ``pobf.kernels`` falls back to the
numpy implementation when ``pobf.kernels._native`` is missing, so a failed
compile only costs speed, never correctness.
"""

import logging

from setuptools import setup
from setuptools.command.build_ext import build_ext

log = logging.getLogger("pobf.setup")


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError as exc:
        log.warning("Cython/numpy unavailable (%s); building pure-python package", exc)
        return []
    ext = Extension(
        "pobf.kernels._native",
        ["src/pobf/kernels/_native.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


class OptionalBuildExt(build_ext):
    """Degrade to the pure-python fallback instead of failing the install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            log.warning("compiled kernels skipped: %s", exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            log.warning("building %s failed (%s); using python kernels", ext.name, exc)


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
