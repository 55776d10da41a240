import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # The compiled tracer is optional: the package falls back to the
    # pure-Python backend when the extension is unavailable.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "periscope.tracing._fast",
                ["src/periscope/tracing/_fast.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
