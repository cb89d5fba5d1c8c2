import os

import numpy as np
from setuptools import Extension, setup

# The extension is optional: without Cython or a compiler the package falls
# back to iterex.qpbo._kernels_py at import time.
ext_modules = []
if os.environ.get("ITEREX_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "iterex.qpbo._kernels",
                    ["src/iterex/qpbo/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
