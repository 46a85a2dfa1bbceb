"""Build script with an optional compiled bit-kernel extension.

The package is fully functional pure-Python. When Cython and a C compiler
are available, `python setup.py build_ext --inplace` compiles the hot
XNOR-popcount kernels (bqn.kernels._bitops_c); the import machinery in
bqn.kernels picks them up automatically.
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
                "bqn.kernels._bitops_c",
                ["src/bqn/kernels/_bitops_c.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
