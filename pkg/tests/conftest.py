from pathlib import Path

import pytest

from seqom.sequences import from_event_lists

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def table2_path():
    return DATA / "table2_scheme.csv"


def random_dataset(rng, n, max_len=5, n_codes=4, min_len=1, weights=False):
    codes = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"[:n_codes]
    lists = [[codes[c] for c in rng.integers(0, n_codes, size=rng.integers(min_len, max_len + 1))]
             for _ in range(n)]
    w = rng.uniform(0.1, 5.0, size=n).round(3).tolist() if weights else None
    return from_event_lists(lists, weights=w)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
