import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


class GaussianFamily:
    """Unit-variance Gaussian likelihood: A(f) = f^2 / 2, A'(f) = f."""

    K = 1

    def log_partition(self, f):
        f = np.asarray(f, dtype=float)
        return 0.5 * (f * f).sum(axis=-1)

    def link(self, f):
        return np.asarray(f, dtype=float)

    def link_derivative(self, f):
        return np.ones_like(np.asarray(f, dtype=float))

    def link_jacobian(self, f):
        f = np.asarray(f, dtype=float)
        return np.broadcast_to(np.eye(f.shape[-1]), f.shape + (f.shape[-1],)).copy()


@pytest.fixture
def gaussian_family():
    return GaussianFamily()


@pytest.fixture
def ridge_problem():
    rng = np.random.default_rng(20240)
    N, P = 2000, 5
    X = rng.standard_normal((N, P))
    theta = rng.standard_normal(P)
    y = X @ theta + 0.5 * rng.standard_normal(N)
    return X, y


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def _report(criterion, ok, detail):
        line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[-1])):
            terminalreporter.write_line(line)
