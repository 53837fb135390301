import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

sources = sorted(s for s in glob.glob("src/*.cpp") if not s.endswith("main.cpp"))

setup(
    ext_modules=[
        Pybind11Extension(
            "uapt._core",
            sources,
            include_dirs=["include", "vendor"],
            cxx_std=20,
            extra_compile_args=["-O2"],
        )
    ],
    cmdclass={"build_ext": build_ext},
)
