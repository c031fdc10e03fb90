from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# -ffp-contract=off: no FMA contraction; -fno-builtin-sincos: keep separate
# scalar sin/cos calls. Both keep the compiled Box-Muller path bit-identical
# to the pure-Python fallback.
extensions = [
    Extension(
        "flowmark._kernels",
        ["src/flowmark/_kernels.pyx"],
        extra_compile_args=[
            "-O2",
            "-ffp-contract=off",
            # keep scalar libm sin/cos: the fused sincos can differ by 1 ulp
            "-fno-builtin-sin",
            "-fno-builtin-cos",
            "-fno-builtin-sincos",
        ],
    )
]

if cythonize is not None:
    ext_modules = cythonize(extensions, language_level="3")
else:
    print("Cython not available; building without the compiled RNG core "
          "(the pure-Python fallback will be used at runtime)")
    ext_modules = []

setup(ext_modules=ext_modules)
