import json
from pathlib import Path

import pytest

import adflow
from adflow.model import load_model

PACKAGE_FIXTURES = Path(adflow.__file__).parent / "fixtures"
TEST_FIXTURES = Path(__file__).parent / "fixtures"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def fixture_path(name: str) -> Path:
    for base in (PACKAGE_FIXTURES, TEST_FIXTURES):
        if (base / name).exists():
            return base / name
    raise FileNotFoundError(name)


def load_fixture(name: str):
    return load_model(fixture_path(name))


def load_json(name: str):
    return json.loads(fixture_path(name).read_text(encoding="utf-8"))


@pytest.fixture
def supplier():
    return load_fixture("supplier.flow")


@pytest.fixture
def supplier_inputs():
    return load_json("supplier.inputs.json")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
