import os

import numpy as np
from setuptools import Extension, setup

extensions = []
if not os.environ.get("NCMOGP_NO_EXT"):
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "ncmogp._core",
                ["src/ncmogp/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
