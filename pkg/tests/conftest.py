import os
import sys
from collections import defaultdict

import pytest
import torch

sys.path.insert(0, os.path.dirname(__file__))

CRITERIA = {
    1: "geometry roundtrips",
    2: "attention suite",
    3: "pooled-token counts and cost",
    4: "finite-difference gradients",
    5: "module and metric oracles",
    6: "loss arithmetic",
    7: "end-to-end shape and range",
    8: "overfit run",
    9: "ablation wiring",
    10: "determinism",
}

_outcomes = defaultdict(list)
_setup_seconds = defaultdict(float)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "setup":
        _setup_seconds[item.nodeid] = report.duration  # module fixtures such as the overfit run
    if report.when == "call" or (report.when == "setup" and not report.passed):
        seconds = report.duration + (_setup_seconds.pop(item.nodeid, 0.0) if report.when == "call" else 0.0)
        _outcomes[marker.args[0]].append((item.name, report.passed, seconds))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        results = _outcomes.get(n)
        if not results:
            terminalreporter.write_line(f"criterion {n:2d} {title}: NOT RUN")
            continue
        failed = [name for name, ok, _ in results if not ok]
        seconds = sum(d for _, _, d in results)
        status = "PASS" if not failed else "FAIL"
        detail = f" (failed: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {n:2d} {title}: {status} [{len(results)} checks, {seconds:.1f}s]{detail}")
