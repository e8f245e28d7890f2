import numpy as np
import pytest

from rf_fusion.geometry import Deployment, build_grid, make_links


@pytest.fixture
def small_deployment():
    """2 x 2 m room, three nodes per side, UWB pair on the low-x side."""
    nodes = [[-0.3, 0.4], [-0.3, 1.0], [-0.3, 1.6], [2.3, 0.4], [2.3, 1.0], [2.3, 1.6]]
    return Deployment((0.0, 0.0, 2.0, 2.0), np.array(nodes), np.array([-0.5, 0.5]), np.array([-0.5, 1.5]))


@pytest.fixture
def small_grid(small_deployment):
    return build_grid(small_deployment, 0.25)


@pytest.fixture
def small_links(small_deployment):
    return make_links(small_deployment)


_criteria: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    prev = _criteria.get(n)
    status = "PASS" if rep.passed and (prev is None or prev[0] == "PASS") else "FAIL"
    details = [d for d in (prev[2] if prev else "", detail) if d]
    _criteria[n] = (status, title, "; ".join(details))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, title, detail = _criteria[n]
        line = f"{status} criterion {n:>2}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
