import sys

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mlcv._discrepancy_cy",
                ["src/mlcv/_discrepancy_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except Exception as exc:  # no Cython/compiler: pure-python fallback is used at runtime
    sys.stderr.write(f"skipping compiled discrepancy core: {exc}\n")

setup(ext_modules=ext_modules)
