import json
from importlib import resources

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def load_schema(name: str) -> dict:
    return json.loads(resources.files("prnu_nua").joinpath("schemas", name).read_text())


@pytest.fixture
def schema():
    return load_schema


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record a one-line verdict for an acceptance criterion; printed in the terminal summary."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
