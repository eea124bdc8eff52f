"""Builds the optional compiled kernels; the package works without them."""
import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler / no Cython
            print(f"warning: compiled kernels not built ({exc}); using NumPy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); using NumPy fallback")


try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("nctmc._ckernels", ["src/nctmc/_ckernels.pyx"], include_dirs=[np.get_include()],
                   extra_compile_args=["-O3"])],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
