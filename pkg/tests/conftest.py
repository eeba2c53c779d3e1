import pytest

from ontoloss.ontology import OntologyGraph


@pytest.fixture
def chain_graph():
    return OntologyGraph.from_pairs(["A", "B", "C"], [(0, 1), (1, 2)])


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
