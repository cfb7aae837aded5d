import sys
from importlib.resources import files
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from htnrefine.parser import parse_domain, parse_instance  # noqa: E402

DATA = files("htnrefine") / "data"

# acceptance criterion id -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def read(name: str) -> str:
    return (DATA / name).read_text()


@pytest.fixture(scope="session")
def logistics():
    return parse_domain(read("logistics.htn"), "logistics.htn")


@pytest.fixture(scope="session")
def example2(logistics):
    return parse_instance(read("example2.inst"), logistics, "example2.inst")


@pytest.fixture(scope="session")
def example3(logistics):
    return parse_instance(read("example3.inst"), logistics, "example3.inst")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'} - {detail}")
