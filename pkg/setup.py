import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("WORKLOAD_FORGE_NO_EXT", "0") != "1":
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "workload_forge._kernels._ck",
        ["src/workload_forge/_kernels/_ck.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
