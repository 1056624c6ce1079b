import os
from pathlib import Path

import pytest

from dialact.corpus import read_corpus
from dialact.model import load_default_model
from dialact.planner import load_default_operators
from dialact.predictor import InterpolationWeights, Predictor, train

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
GOLDEN = HERE / "golden"

BEG = "BEGRUESSUNG"
INIT = "INIT_TERMINABSPRACHE"
VOR = "VORSCHLAG"
ABL = "ABLEHNUNG"
AKZ = "AKZEPTANZ"
BEST = "BESTAETIGUNG"
VERAB = "VERABSCHIEDUNG"
AUFF_VOR = "AUFFORDERUNG_VORSCHLAG"
AUFF_STELL = "AUFFORDERUNG_STELLUNG"

D1 = [BEG, INIT, VOR, AKZ, BEST, VERAB]
D2 = [BEG, INIT, VOR, ABL, VOR, AKZ, BEST, VERAB]
EX = [INIT, VOR, VOR, VOR, ABL, VOR]

Q_EXAMPLE = InterpolationWeights(0.2, 0.3, 0.5)


@pytest.fixture(scope="session")
def model():
    return load_default_model()


@pytest.fixture(scope="session")
def inventory(model):
    return model[0]


@pytest.fixture(scope="session")
def machine(model):
    return model[1]


@pytest.fixture(scope="session")
def library(inventory):
    return load_default_operators(inventory)


@pytest.fixture(scope="session")
def tiny(inventory):
    return read_corpus(FIXTURES / "tiny.corpus", inventory)


@pytest.fixture(scope="session")
def excerpt(inventory):
    return read_corpus(FIXTURES / "excerpt.corpus", inventory)


@pytest.fixture(scope="session")
def tiny_tables(tiny, inventory):
    return train(tiny, inventory)


@pytest.fixture(scope="session")
def tiny_predictor(tiny_tables):
    return Predictor(tiny_tables, Q_EXAMPLE)


def golden(name: str, actual: str) -> str:
    """Expected text of a golden file.

    Set DIALACT_UPDATE_GOLDEN=1 to rewrite the files from ``actual``; review
    the diff before committing.
    """
    path = GOLDEN / name
    if os.environ.get("DIALACT_UPDATE_GOLDEN") == "1":
        path.write_text(actual, encoding="utf-8")
    if not path.exists():
        pytest.fail(f"golden file {path} is missing")
    return path.read_text(encoding="utf-8")


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
