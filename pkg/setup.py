import os

from setuptools import Extension, setup

# The compiled kernel is optional: without Cython or a compiler the package
# falls back to the pure-Python kernel at import time.
ext_modules = []
if os.environ.get("PFDAVG_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "pfdavg.petri._ckernel",
                    ["src/pfdavg/petri/_ckernel.pyx"],
                    # no -ffast-math: results must match the Python kernel bit for bit
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
