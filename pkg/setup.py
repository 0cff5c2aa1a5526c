"""Build hook for the optional compiled distance kernel.

Without Cython or a compiler the package installs pure Python and the
distance module falls back to its heap-based implementation.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "bzkplate._distance_core",
                ["src/bzkplate/_distance_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
