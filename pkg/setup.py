"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-numpy fallback is selected
at import time), so any compilation failure downgrades to a plain install
instead of aborting.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "oodkit._kernels._fast",
                ["src/oodkit/_kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": 3},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"oodkit: skipping Cython extension ({exc}); pure-Python kernels will be used")
    extensions = []

setup(ext_modules=extensions)
