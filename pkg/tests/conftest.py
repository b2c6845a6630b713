import pytest

from etqkd.config import load_scenario


@pytest.fixture(scope="session")
def compensation():
    return load_scenario("compensation")


@pytest.fixture(scope="session")
def filtering():
    return load_scenario("filtering")


@pytest.fixture(scope="session")
def unmanaged():
    return load_scenario("unmanaged")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
