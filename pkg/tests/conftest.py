import numpy as np
import pytest

from eitpimc import WalkParams, default_domain


@pytest.fixture(scope="session")
def domain():
    return default_domain()


@pytest.fixture
def fast_params():
    return WalkParams(n_paths=2000, seed=7)


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1)[:, None]


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {name} | {detail}"
    print(line)
    ACCEPTANCE_LINES.append((number, line))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES, key=lambda t: t[0]):
            terminalreporter.write_line(line)
