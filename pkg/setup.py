from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "steinmapseq._core._speedups",
                ["src/steinmapseq/_core/_speedups.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-python fallback is selected at import time when the compiled
    # core is unavailable.
    ext_modules = []

setup(ext_modules=ext_modules)
