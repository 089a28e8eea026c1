import json
from pathlib import Path

import numpy as np
import pytest

from mtdist.datagen import random_tree
from mtdist.merge_tree import tree_from_json, tree_from_lengths

DATA = Path(__file__).parent / "data"


def random_pairs(seed, count, max_nodes=8, integer_lengths=False):
    rng = np.random.default_rng(seed)
    return [
        (random_tree(rng, max_nodes=max_nodes, integer_lengths=integer_lengths),
         random_tree(rng, max_nodes=max_nodes, integer_lengths=integer_lengths))
        for _ in range(count)
    ]


def frozen_cases():
    data = json.loads((DATA / "frozen_oracle.json").read_text())
    return [(tree_from_json(c["t1"]), tree_from_json(c["t2"]), c["distance"]) for c in data["cases"]]


@pytest.fixture
def two_leaf():
    # root(0) -> s(1) -> {a(5), b(3)}
    return tree_from_lengths([None, 0, 1, 1], [0, 1, 4, 2])


@pytest.fixture
def single_edge():
    return tree_from_lengths([None, 0], [0, 3])


# acceptance reporting -------------------------------------------------------------
#
# Each acceptance test records one PASS/FAIL line.  The lines are printed as
# the test runs (visible with -s) and repeated in the terminal summary so they
# also appear in captured runs such as `pytest -v | tee`.

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def emit(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line, flush=True)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
