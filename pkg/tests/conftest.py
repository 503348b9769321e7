from __future__ import annotations

from pathlib import Path

import pytest

from divmatch.cli import load_arrivals, load_instance
from divmatch.core import Person, uniform_instance

DATA = Path(__file__).resolve().parents[1] / "src" / "divmatch" / "data"

# criterion number -> [(label, passed or None for notes, detail)], filled by the acceptance suite
ACCEPTANCE: dict[int, list[tuple[str, bool | None, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        verdict = "PASS" if all(ok is not False for _, ok, _ in checks) else "FAIL"
        parts = []
        for label, ok, detail in checks:
            tag = "note" if ok is None else ("ok" if ok else "FAILED")
            parts.append(f"{label} [{tag}] {detail}")
        terminalreporter.write_line(f"criterion {n:>2}: {verdict} | " + "; ".join(parts))


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def equal_instance():
    return load_instance(DATA / "equal_utility_instance.json")


@pytest.fixture(scope="session")
def unequal_instance():
    return load_instance(DATA / "unequal_utility_instance.json")


@pytest.fixture(scope="session")
def skewed_instance():
    return load_instance(DATA / "skewed_instance.json")


@pytest.fixture(scope="session")
def worst_instance():
    return load_instance(DATA / "worst_case_instance.json")


@pytest.fixture(scope="session")
def toy():
    inst = load_instance(DATA / "toy.json")
    return inst, load_arrivals(DATA / "toy_arrivals.csv", inst)


@pytest.fixture
def small_instance():
    return uniform_instance(2, 2, [1.0, 2.0, 3.0], max_arrivals=20)


def people(labels, attr="cluster", prefix="P", max_teams=None):
    return [Person(f"{prefix}{i}", {attr: k}, max_teams=max_teams) for i, k in enumerate(labels)]
