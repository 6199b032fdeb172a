import numpy as np
import pytest

from nci.codegen import CodeSpec, bank_for_interval, code_for_interval


@pytest.fixture
def make_code():
    """(bank, code of source 0 over [0, n)) for a seed."""

    def make(n=1024, seed=0, num_codes=1, **kw):
        bank = bank_for_interval(CodeSpec(master_seed=seed, num_codes=num_codes, **kw), 0, n)
        return bank, code_for_interval(bank, 0, n)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
