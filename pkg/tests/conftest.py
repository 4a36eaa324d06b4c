import numpy as np
import pytest

from dofsynth.optics import delta_grid, make_synthetic_grid

_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = marker.args
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _ACCEPTANCE[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[number]
        line = f"criterion {number}: {status}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def synthetic_grid():
    """20 x 20 x 3 x 31 x 31 analytic defocus grid."""
    return make_synthetic_grid()


@pytest.fixture(scope="session")
def small_grid():
    return make_synthetic_grid(n_depths=6, n_radii=3, k=9)


@pytest.fixture(scope="session")
def identity_grid():
    return delta_grid()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
