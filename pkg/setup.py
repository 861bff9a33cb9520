import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: the pure-Python fallback is used
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "demandml._kernels",
                ["src/demandml/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                language="c++",
                optional=True,
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
