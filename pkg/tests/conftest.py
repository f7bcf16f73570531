import numpy as np
import pytest

from crnlab import BoxDomain, class_of, parse_network


@pytest.fixture(scope="session")
def abc():
    return parse_network("A + 2B <-> B + C")


@pytest.fixture(scope="session")
def abc_class(abc):
    return class_of(abc, np.array([2.0, 1.0, 1.0]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def line64():
    return BoxDomain.unit(64)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion and return the verdict."""
    lines = request.config.stash[_ACCEPTANCE]

    def report(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
