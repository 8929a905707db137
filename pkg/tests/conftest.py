import numpy as np
import pytest

from conic_market.fixtures import fixture
from conic_market.generators import random_tree, with_return
from conic_market.io import instance_from_dict
from conic_market.tree import AdaptedProcess


def random_cd_market(seed: int, T: int = 2):
    inst = with_return(random_tree(T=T, branching=2, d=2, N=1, seed=seed), "cobb_douglas",
                       gamma=0.6, p=1.0 + seed % 3, eta=0.05)
    return instance_from_dict(inst).market


def random_buy_plan(market, rng, scale: float = 1.0):
    """Buy industrial units with cash at non-leaf nodes along a cone generator."""
    tree = market.tree
    d, m = market.d, market.m
    vals = np.zeros((tree.n_nodes, m))
    for i in range(tree.n_nodes):
        if tree.is_leaf(i):
            continue
        pi = market.cones[i].bidask
        a = rng.uniform(0, scale, size=market.N)
        vals[i, 0] = -sum(pi[0, d + j] * a[j] for j in range(market.N))
        vals[i, d:] = a
    return AdaptedProcess(tree, vals)


@pytest.fixture(scope="session")
def fx():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = fixture(name)
        return cache[name]

    return get


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
