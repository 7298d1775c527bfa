import numpy as np
import pytest

from penbar import available_problems
from penbar.kernels import available_backends

PROBLEMS = available_problems()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(params=PROBLEMS)
def problem_name(request):
    return request.param


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param


# criterion number -> list of (ok, detail) from the acceptance suite
ACCEPTANCE = {}


@pytest.fixture
def verdict():
    def record(criterion, ok, detail):
        ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[criterion]
        ok = all(p[0] for p in parts)
        detail = "; ".join(f"{'ok' if p[0] else 'FAILED'} {p[1]}" for p in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
