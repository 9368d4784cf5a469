import shutil
import sys
from pathlib import Path

import pytest

from rpmon import rpltl as lt
from rpmon.smt import SmtSession

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def pytest_collection_modifyitems(config, items):
    if shutil.which("z3") is None:
        skip = pytest.mark.skip(reason="z3 binary not on PATH (pip install z3-solver)")
        for item in items:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def smt():
    with SmtSession() as s:
        yield s


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


def load_spec(name: str) -> lt.Spec:
    return lt.parse((FIXTURES / f"{name}.rpltl").read_text())


def load_hoa(name: str) -> str:
    return (FIXTURES / f"{name}.hoa").read_text()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for n in sorted(report):
            terminalreporter.write_line(report[n])
