import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("GFFLAB_NO_EXT", "0") != "1":
    import numpy
    from Cython.Build import cythonize

    np_dir = os.path.dirname(numpy.__file__)
    ext_modules = cythonize(
        [
            Extension(
                "gfflab.kernels._ckern",
                ["src/gfflab/kernels/_ckern.pyx"],
                include_dirs=[numpy.get_include()],
                library_dirs=[os.path.join(np_dir, "random", "lib"),
                              os.path.join(np_dir, "_core", "lib")],
                libraries=["npyrandom", "npymath"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
