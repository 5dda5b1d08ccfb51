import sys
from pathlib import Path

import pytest

from envtrace.trace import load_trace

DATA = Path(__file__).resolve().parents[1] / "src" / "envtrace" / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def fixture_traces():
    return (
        load_trace(DATA / "map_scan_ground_truth.trace.jsonl"),
        load_trace(DATA / "map_scan_predicted.trace.jsonl"),
    )


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if not mod or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n, (ok, detail) in sorted(mod.RESULTS.items()):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
