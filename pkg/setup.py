"""Optional Cython build; the package falls back to pure Python without it."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("RENVOL_NO_EXTENSIONS", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("renvol._kernels", ["src/renvol/_kernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": "3"},
            quiet=True,
        )
        for ext in ext_modules:
            ext.optional = True

setup(ext_modules=ext_modules)
