from Cython.Build import cythonize
from setuptools import Extension, setup

setup(
    ext_modules=cythonize(
        [Extension("formality._kernels", ["src/formality/_kernels.pyx"])],
        compiler_directives={"language_level": "3"},
    )
)
