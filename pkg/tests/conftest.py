import pytest

from edgelift import EdgeList, EdgeRecord

# members {1,2} treated, {3,4} control
E1_RECORDS = [
    EdgeRecord(1, 2, 3, True, True),
    EdgeRecord(1, 3, 2, True, False),
    EdgeRecord(2, 4, 0, True, False),
    EdgeRecord(3, 1, 1, False, True),
    EdgeRecord(3, 4, 5, False, False),
]
E1_TEXT = "src,dest,msg,srcT,destT\n1,2,3,1,1\n1,3,2,1,0\n2,4,0,1,0\n3,1,1,0,1\n3,4,5,0,0\n"


@pytest.fixture
def e1_edges():
    return EdgeList.from_records(E1_RECORDS)


@pytest.fixture
def e1_file(tmp_path):
    path = tmp_path / "e1.csv"
    path.write_text(E1_TEXT)
    return path


@pytest.fixture
def write_lines(tmp_path):
    def _write(text, name="edges.csv"):
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
