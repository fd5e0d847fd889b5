import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ext = Pybind11Extension(
    "alignsae._core",
    sorted(glob.glob("src/*.cpp")) + ["python/bindings.cpp"],
    include_dirs=["include", "vendor", "/usr/include/eigen3"],
    cxx_std=20,
    extra_compile_args=["-O2"],
)

setup(
    packages=["alignsae"],
    package_dir={"alignsae": "python/alignsae"},
    ext_modules=[ext],
    cmdclass={"build_ext": build_ext},
)
