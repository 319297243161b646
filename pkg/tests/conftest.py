import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hurwitz(rng, n=2):
    """Random real matrix with eigenvalues shifted into the open left half plane."""
    A = rng.normal(size=(n, n))
    shift = np.max(np.linalg.eigvals(A).real) + rng.uniform(0.2, 2.0)
    return A - shift * np.eye(n)


# one line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
