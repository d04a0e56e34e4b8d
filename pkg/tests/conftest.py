import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cone_point(rng, n, k, scale=1.0):
    """Rejection-sample a point of Gamma_k from a shifted Gaussian."""
    from weingarten import symcurv

    while True:
        lam = rng.normal(size=n) * scale + rng.uniform(0.0, 1.5) * scale
        if symcurv.in_gamma_k(lam, k) and symcurv.cone_margin(lam, k) > 1e-3 * scale**k:
            return lam


# acceptance criteria register one line each; printed after the run
ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    def record(number, title, ok, detail, seconds=None):
        t = f" [{seconds:.2f} s]" if seconds is not None else ""
        ACCEPTANCE_LINES[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title}: {detail}{t}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
