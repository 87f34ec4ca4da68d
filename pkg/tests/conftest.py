import pytest

from helpers import tiny_corpus
from mcqa_transfer.synth import encode_corpus


@pytest.fixture(scope="session")
def tiny_data():
    return encode_corpus(tiny_corpus())[1]


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
