import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from riskshare import (  # noqa: E402
    DualPower,
    Identity,
    Power,
    VaRIndicator,
    capped_linear,
    max_of,
    shifted_linear,
)

CORPUS = {
    "identity": Identity(),
    "power2": Power(2.0),
    "power3": Power(3.0),
    "sqrt": Power(0.5),
    "dual_power2": DualPower(2.0),
    "dual_power3": DualPower(3.0),
    "var03": VaRIndicator(0.3),
    "shifted_quarter": shifted_linear(0.25),
    "es_seven_eighths": capped_linear(0.875),
    "sqrt_or_quadratic": max_of([Power(0.5), DualPower(2.0)]),
}


@pytest.fixture(params=sorted(CORPUS), ids=sorted(CORPUS))
def corpus_h(request):
    return CORPUS[request.param]


ACCEPTANCE_LINES: list[str] = []
FULL_SUITE_LIMIT = 300.0
_started = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        # only meaningful when the whole tests/ directory was collected
        if len(terminalreporter.stats.get("passed", [])) + len(terminalreporter.stats.get("failed", [])) > 100:
            elapsed = time.perf_counter() - _started
            status = "PASS" if elapsed < FULL_SUITE_LIMIT else "FAIL"
            ACCEPTANCE_LINES.append(f"{status} C11 full suite runtime: {elapsed:.1f}s (limit {FULL_SUITE_LIMIT:.0f}s)")
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
