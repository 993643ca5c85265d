import time

import numpy as np
import pytest
from hypothesis import settings

from llob import make_params

settings.register_profile("llob", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("llob")

# verdict lines, repeated in the terminal summary so captured runs show them
VERDICTS: list[str] = []


@pytest.fixture
def unit_params():
    # sigma = sqrt 2 gives D = 1, so J = L = 1
    return make_params(np.sqrt(2.0), L=1.0)


@pytest.fixture
def verdict(request):
    """Print one pass/fail line per acceptance criterion and assert it."""
    start = time.perf_counter()

    def check(ok: bool, detail: str, limit: float | None = None):
        elapsed = time.perf_counter() - start
        timed = limit is None or elapsed < limit
        tag = "PASS" if ok and timed else "FAIL"
        budget = "" if limit is None else f" [{elapsed:.1f}s / {limit:g}s]"
        line = f"{tag} {request.node.name}: {detail}{budget}"
        VERDICTS.append(line)
        print("\n" + line)
        assert ok, detail
        assert timed, f"runtime {elapsed:.1f}s over the {limit:g}s budget"

    return check


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
