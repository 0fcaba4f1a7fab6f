import pytest

from fgreward.scoring import load_system


@pytest.fixture(scope="session")
def radcliq6():
    return load_system("radcliq6")


@pytest.fixture(scope="session")
def mrscore7():
    return load_system("mrscore7")


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_line(request):
    """Record one PASS/FAIL line for the acceptance summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number, name, ok, detail):
        lines[number] = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {name} ({detail})"
        print(lines[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
