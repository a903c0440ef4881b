import sys
from importlib import resources
from pathlib import Path

import pytest

FIXTURE_IDS = ("fx001", "fx002", "fx003")


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return Path(str(resources.files("convpunct") / "data" / "fixtures"))


@pytest.fixture(scope="session")
def embeddings_path() -> Path:
    return Path(str(resources.files("convpunct") / "data" / "fixture_embeddings.txt"))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        passed, detail = results[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
