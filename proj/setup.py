import os
from pathlib import Path

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ROOT = Path(__file__).parent


def eigen_include() -> str:
    override = os.environ.get("EIGEN3_INCLUDE_DIR")
    candidates = [override] if override else []
    candidates += ["/usr/include/eigen3", "/usr/local/include/eigen3"]
    for c in candidates:
        if c and (Path(c) / "Eigen" / "Dense").exists():
            return c
    raise RuntimeError(
        "Eigen headers not found; set EIGEN3_INCLUDE_DIR to the directory "
        "containing Eigen/Dense"
    )


sources = ["python/coidyn_module.cpp"] + sorted(
    str(p.relative_to(ROOT)) for p in (ROOT / "src").glob("*.cpp")
)

setup(
    ext_modules=[
        Pybind11Extension(
            "coidyn._coidyn",
            sources=sources,
            include_dirs=["include", "vendor", eigen_include()],
            cxx_std=20,
        )
    ],
    cmdclass={"build_ext": build_ext},
)
