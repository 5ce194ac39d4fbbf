"""Build script for the optional compiled sampling kernel.

The package is pure Python except for plpkit._kernel_c, a Cython twin of
plpkit._kernel_py. The extension is skipped (with a warning) when Cython or a
C compiler is unavailable, or when PLPKIT_NO_EXT is set; the package then runs
on the pure backend. -ffp-contract=off keeps the compiled kernel bit-identical
to the interpreted one (no fused multiply-add surprises).
"""

import os
import sys

from setuptools import setup

ext_modules = []
if not os.environ.get("PLPKIT_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        extra = []
        if not sys.platform.startswith("win"):
            extra = ["-O2", "-ffp-contract=off"]
        ext_modules = cythonize(
            [
                Extension(
                    "plpkit._kernel_c",
                    ["src/plpkit/_kernel_c.pyx"],
                    extra_compile_args=extra,
                )
            ],
            language_level=3,
        )
    except ImportError:
        print("warning: Cython not available, building without compiled kernel")

setup(ext_modules=ext_modules)
