from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-Python fallback in dsmsim.search is used when the extension is absent.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "dsmsim._csearch",
                ["src/dsmsim/_csearch.pyx"],
                language="c++",
                extra_compile_args=["-O3", "-std=c++11"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
