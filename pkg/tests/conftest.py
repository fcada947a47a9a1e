import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ------------------------------------------------------------ acceptance summary

_CRITERIA: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    n, text = marker.args
    entry = _CRITERIA.setdefault(n, [True, text, []])
    entry[0] = entry[0] and rep.passed
    entry[2].extend(str(v) for k, v in item.user_properties if k == "detail" and str(v) not in entry[2])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, text, details = _CRITERIA[n]
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {text}"
        if details:
            line += "  [" + "; ".join(details) + "]"
        terminalreporter.write_line(line)
