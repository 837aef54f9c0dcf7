import numpy as np
import pytest

from behavior_detect.system_sim import NoiseSpec, random_stable_system


@pytest.fixture(scope="session")
def plant():
    """3-state SISO plant used throughout the comparisons."""
    return random_stable_system(3, 1, 1, seed=7)


@pytest.fixture(scope="session")
def unit_noise():
    return NoiseSpec(1.0, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_stable_matrix(rng, d, radius=None):
    M = rng.standard_normal((d, d))
    target = rng.uniform(0.1, 0.9) if radius is None else radius
    return M * (target / np.max(np.abs(np.linalg.eigvals(M))))


_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    # module fixtures do the heavy lifting, so count setup time too
    item.acceptance_time = getattr(item, "acceptance_time", 0.0) + report.duration
    if report.when == "call" or (report.when == "setup" and report.failed):
        status = "PASS" if report.passed else "FAIL"
        _ACCEPTANCE.append((marker.args[0], status, f"{item.acceptance_time:.1f}s", item.name))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, duration, name in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{status}  criterion {label:<4} {name} ({duration})")
