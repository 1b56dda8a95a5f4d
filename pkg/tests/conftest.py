import copy
import json
from pathlib import Path

import pytest

from thinjunction.composite import solve_terms
from thinjunction.junction_config import load_spec, spec_from_dict

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def config_dict(name):
    return json.loads((CONFIGS / f"{name}.json").read_text())


def problem_from(data):
    return spec_from_dict(copy.deepcopy(data))


@pytest.fixture(scope="session")
def worked():
    return load_spec(CONFIGS / "worked.json")


@pytest.fixture(scope="session")
def worked_thin():
    return load_spec(CONFIGS / "worked_thin.json")


@pytest.fixture(scope="session")
def generic():
    return load_spec(CONFIGS / "generic.json")


@pytest.fixture(scope="session")
def worked_terms(worked):
    return solve_terms(worked, 2, node=False)


@pytest.fixture(scope="session")
def generic_terms(generic):
    """Orders 0..2 with node terms (resolution 16, truncation 16)."""
    return solve_terms(generic, 2, node=True)


@pytest.fixture(scope="session")
def thin_terms(worked_thin):
    return solve_terms(worked_thin, 1, node=True)


# criterion -> list of (part, passed); filled by test_acceptance, printed at the end of the session
ACCEPTANCE = {}


def record(criterion, part, passed):
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed)))
    print(f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {part}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        ok = all(p for _, p in parts)
        failed = [name for name, p in parts if not p]
        tail = "" if ok else f"  (failing: {'; '.join(failed)})"
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {c}{tail}")
