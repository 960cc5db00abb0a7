from __future__ import annotations

import pytest

from staticmap.config import PipelineConfig
from staticmap.pipeline import run_scans
from staticmap.synth import benchmark_scene, curbed_scene, generate_sequence

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def benchmark_seq():
    return generate_sequence(benchmark_scene())


@pytest.fixture(scope="session")
def benchmark_refined(benchmark_seq):
    return run_scans(benchmark_seq.pairs(), PipelineConfig(), threads=1)


@pytest.fixture(scope="session")
def curbed_seq():
    return generate_sequence(curbed_scene())


@pytest.fixture
def record_criterion():
    def record(name: str, ok: bool | None, detail: str) -> None:
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"[{status}] {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
