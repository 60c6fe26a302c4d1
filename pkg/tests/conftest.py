import pytest

from awgrpon.topology import build_paper_cell


@pytest.fixture(scope="session")
def cell():
    return build_paper_cell()


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
