import json
from importlib.resources import files

import numpy as np
import pytest

from trilogy.triangulation import LabeledTriangulation


def load_fixture(name: str) -> LabeledTriangulation:
    text = (files("trilogy") / "fixtures" / f"{name}.json").read_text()
    return LabeledTriangulation.from_json(json.loads(text))


FIXTURES = ("example_0_3", "example_0_4", "example_1_2")


@pytest.fixture(params=FIXTURES)
def surface(request):
    return load_fixture(request.param)


@pytest.fixture
def sphere4():
    return load_fixture("example_0_4")


@pytest.fixture
def torus2():
    return load_fixture("example_1_2")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance bookkeeping: criterion -> list of (part, passed, detail)
_CRITERIA: dict[int, list] = {}
_TITLES = {
    1: "special-function identities",
    2: "exact combinatorics",
    3: "constrained representation",
    4: "operator pentagons",
    5: "representation consistency",
}


@pytest.fixture
def criterion():
    def record(number: int, part: str, passed: bool, detail: str = ""):
        _CRITERIA.setdefault(number, []).append((part, bool(passed), detail))
        print(f"criterion {number} / {part}: {'PASS' if passed else 'FAIL'} {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        parts = _CRITERIA[n]
        bad = [p for p, ok, _ in parts if not ok]
        status = "PASS" if not bad else "FAIL"
        note = f"{len(parts)} checks" if not bad else "failed: " + "; ".join(bad)
        tr.write_line(f"criterion {n} {_TITLES.get(n, '')}: {status} ({note})")
        for part, ok, detail in parts:
            tr.write_line(f"    {'ok  ' if ok else 'FAIL'} {part} {detail}")
