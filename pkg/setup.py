"""Build the optional Cython core; the package still installs if compilation fails."""
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"snps3: skipping compiled core ({exc}); pure-Python kernels will be used", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"snps3: failed to build {ext.name} ({exc})", file=sys.stderr)


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    exts = [
        Extension(
            "snps3._speedups",
            ["src/snps3/_speedups.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
        )
    ]
    return cythonize(exts, compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
