import pathlib

import pytest

FIXTURES = pathlib.Path(__file__).resolve().parents[1] / "fixtures"

# criterion name -> bool, registered by the acceptance module
acceptance_results: dict[str, bool] = {}


@pytest.fixture
def fixtures_dir() -> pathlib.Path:
    return FIXTURES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, passed in acceptance_results.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}: {name}")
