import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=60
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------- acceptance
# Tests in test_acceptance.py carry a ``criterion`` marker; the summary below
# prints one PASS/FAIL line per criterion with the recorded measurements.
_gate: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion label")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    name = mark.args[0]
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    if call.when == "call" or failed:
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _gate[name] = ("FAIL" if failed else "PASS", detail)


def pytest_terminal_summary(terminalreporter):
    if not _gate:
        return
    terminalreporter.section("acceptance gate")
    for name, (status, detail) in _gate.items():
        terminalreporter.write_line(f"{status}  {name}" + (f"  [{detail}]" if detail else ""))
