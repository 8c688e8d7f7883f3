import numpy as np
import pytest

from curatelink.graph import BipartiteGraph


def random_graph(rng, n_groups, n_items, density=0.4, min_item_deg=0):
    """Random bipartite graph; every item gets at least ``min_item_deg`` groups."""
    a = rng.random((n_groups, n_items)) < density
    for i in range(n_items):
        short = min_item_deg - a[:, i].sum()
        if short > 0:
            free = np.flatnonzero(~a[:, i])
            a[rng.choice(free, size=short, replace=False), i] = True
    g, i = np.nonzero(a)
    return BipartiteGraph.from_edges(n_groups, n_items, g, i)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria append (number, passed, detail) here; printed in the summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
