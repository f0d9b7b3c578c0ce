import numpy as np
import pytest

from dsrclink import _kernels_py

try:
    from dsrclink import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

ACCEPTANCE = {}


@pytest.fixture(params=["python", "cython"])
def kernel_module(request):
    if request.param == "cython":
        if _kernels_c is None:
            pytest.skip("compiled kernels not built")
        return _kernels_c
    return _kernels_py


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def record_acceptance(number: int, title: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE[number] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {title} {detail}".rstrip())
