from pathlib import Path

import pytest

from spanparser.treebank import Bracket, prepare, read_trees

DATA = Path(__file__).parent / "data"

EXAMPLE = "(S (NP (PRP I)) (VP (MD do) (VBP like) (S (VP (VBG eating) (NP (NN fish))))))"

EXAMPLE_GOLD = frozenset({
    Bracket("NP", 0, 1),
    Bracket("NP", 4, 5),
    Bracket("S", 3, 5),
    Bracket("VP", 3, 5),
    Bracket("VP", 1, 5),
    Bracket("S", 0, 5),
})


@pytest.fixture
def example():
    return prepare(read_trees(EXAMPLE)[0])


@pytest.fixture(scope="session")
def fixture_trees():
    from spanparser.treebank import read_treebank

    return [prepare(t) for t in read_treebank(DATA / "fixture.mrg")]


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, name, ok, detail):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"criterion {number} {name}: {status} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
