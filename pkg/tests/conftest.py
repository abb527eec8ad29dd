import numpy as np
import pytest

from claimrank.corpus import Corpus, Event, Utterance

# Filled by tests/test_acceptance.py; printed once at the end of the session.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


def make_event(event_id, split, labels, speaker="A", start=1):
    utts = tuple(Utterance(event_id, start + i, speaker, f"sentence {i} of {event_id}", int(l))
                 for i, l in enumerate(labels))
    return Event(event_id, split, utts)


@pytest.fixture
def small_corpus():
    return Corpus((
        make_event("e1", "train", [0, 1, 0, 0, 1, 0]),
        make_event("e2", "train", [0, 0, 1, 0]),
        make_event("e3", "dev", [1, 0, 0]),
        make_event("e4", "test", [0, 1, 0, 0]),
    ))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _isolated_cwd(tmp_path, monkeypatch):
    # Commands without output files log provenance to the working directory.
    monkeypatch.chdir(tmp_path)
