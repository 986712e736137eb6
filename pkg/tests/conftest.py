import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from hadaflow import Euclidean, Hyperbolic, Product, Spider

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

BACKENDS = {
    "euclidean": Euclidean(3),
    "hyperbolic": Hyperbolic(2),
    "spider": Spider(3),
    "product": Product((Euclidean(2), Spider(3))),
}

seeds = st.integers(min_value=0, max_value=2**32 - 1)
backend_names = st.sampled_from(sorted(BACKENDS))


def random_points(space, seed, k, scale=2.0):
    rng = np.random.default_rng(seed)
    return [space.random_point(rng, scale) for _ in range(k)]


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return BACKENDS[request.param]


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::")[-1]
        number = int(name.split("_")[2])
        prev = _ACCEPTANCE.get(number, True)
        _ACCEPTANCE[number] = prev and report.passed
    elif "test_acceptance.py::test_criterion_" in report.nodeid and report.failed:
        number = int(report.nodeid.split("::")[-1].split("_")[2])
        _ACCEPTANCE[number] = False


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        verdict = "PASS" if _ACCEPTANCE[number] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}")
