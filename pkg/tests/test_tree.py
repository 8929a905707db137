import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conic_market.errors import (
    DanglingParent,
    DuplicateId,
    LeafAtWrongTime,
    NodeIsLeaf,
    ProbabilityNotStochastic,
)
from conic_market.tree import (
    AdaptedProcess,
    build_tree,
    conditional_expectation,
    is_martingale,
    leaf_expectation,
    martingale_from_leaves,
)


def _desc(nodes, T=1):
    return {"T": T, "d": 1, "N": 1, "nodes": nodes}


def one_step(q=(0.5, 0.5)):
    nodes = [{"id": "r", "t": 0, "parent": None, "q": 1.0}]
    nodes += [{"id": f"c{k}", "t": 1, "parent": "r", "q": qk} for k, qk in enumerate(q)]
    return build_tree(_desc(nodes))


def two_step():
    nodes = [
        {"id": "r", "t": 0, "parent": None, "q": 1.0},
        {"id": "a", "t": 1, "parent": "r", "q": 0.3},
        {"id": "b", "t": 1, "parent": "r", "q": 0.7},
    ]
    for p in "ab":
        nodes += [{"id": p + s, "t": 2, "parent": p, "q": 0.5} for s in "ud"]
    return build_tree(_desc(nodes, T=2))


def test_leaf_probabilities_one_step():
    tree = one_step()
    assert np.allclose(tree.leaf_probs(), [0.5, 0.5])


def test_chain_probabilities_are_one():
    nodes = [
        {"id": 0, "t": 0, "parent": None, "q": 1.0},
        {"id": 1, "t": 1, "parent": 0, "q": 1.0},
        {"id": 2, "t": 2, "parent": 1, "q": 1.0},
    ]
    tree = build_tree(_desc(nodes, T=2))
    assert np.all(tree.prob == 1.0)


def test_leaf_probabilities_two_step():
    tree = two_step()
    assert np.allclose(tree.leaf_probs(), [0.15, 0.15, 0.35, 0.35])
    assert abs(tree.leaf_probs().sum() - 1.0) < 1e-10


def test_breadth_first_order():
    tree = two_step()
    assert tree.ids == ("r", "a", "b", "ad", "au", "bd", "bu")
    assert list(tree.time) == [0, 1, 1, 2, 2, 2, 2]


@pytest.mark.parametrize(
    "nodes, err",
    [
        ([("r", 0, None, 1.0), ("r", 1, "r", 1.0)], DuplicateId),
        ([("r", 0, None, 1.0), ("c", 1, "zz", 1.0)], DanglingParent),
        ([("r", 0, None, 1.0), ("a", 1, "r", 0.5), ("b", 1, "r", 0.4)], ProbabilityNotStochastic),
        ([("r", 0, None, 1.0), ("a", 1, "r", 1.0), ("b", 2, "a", 1.0)], LeafAtWrongTime),
    ],
)
def test_build_tree_rejects(nodes, err):
    with pytest.raises(err):
        build_tree(_desc(nodes))


def test_root_is_not_a_leaf_even_for_short_trees():
    with pytest.raises(LeafAtWrongTime):
        build_tree(_desc([("r", 0, None, 1.0)]))


def test_conditional_expectation_examples():
    tree = one_step()
    proc = AdaptedProcess(tree, [[0, 0], [1, 2], [1, 0.5]])
    assert np.allclose(conditional_expectation(proc, 0), [1, 1.25])

    const = AdaptedProcess(tree, [[3.0, -1.0]] * 3)
    assert np.allclose(conditional_expectation(const, 0), [3.0, -1.0])

    tree3 = one_step((1 / 3, 2 / 3))
    proc3 = AdaptedProcess(tree3, [[0.0], [3.0], [0.0]])
    assert np.allclose(conditional_expectation(proc3, 0), [1.0])


def test_conditional_expectation_at_leaf():
    tree = one_step()
    with pytest.raises(NodeIsLeaf):
        conditional_expectation(AdaptedProcess.zeros(tree, 1), 1)


def test_is_martingale_examples():
    tree = one_step()
    assert is_martingale(AdaptedProcess(tree, [[2.0]] * 3))
    assert is_martingale(AdaptedProcess(tree, [[1, 1.25], [1, 2], [1, 0.5]]))
    assert not is_martingale(AdaptedProcess(tree, [[1, 1.3], [1, 2], [1, 0.5]]))


def test_martingale_under_changed_measure():
    tree = one_step()
    proc = AdaptedProcess(tree, [[1.0], [2.0], [0.5]])
    assert not is_martingale(proc)
    w = tree.node_weights([1 / 3, 2 / 3])
    assert is_martingale(proc, node_weights=w)


finite = st.floats(-100, 100, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=7, max_size=7), st.lists(finite, min_size=7, max_size=7), finite, finite)
def test_conditional_expectation_is_linear(x, y, a, b):
    tree = two_step()
    X, Y = AdaptedProcess(tree, x), AdaptedProcess(tree, y)
    for i in (0, 1, 2):
        lhs = conditional_expectation(a * X + b * Y, i)
        rhs = a * conditional_expectation(X, i) + b * conditional_expectation(Y, i)
        scale = 1.0 + abs(a) * 100 + abs(b) * 100
        assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * scale)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=4, max_size=4))
def test_tower_property(leaf_vals):
    tree = two_step()
    closed = martingale_from_leaves(tree, np.array(leaf_vals)[:, None])
    direct = leaf_expectation(tree, np.array(leaf_vals)[:, None])
    assert np.allclose(closed.values[0], direct, atol=1e-12 * (1 + np.abs(leaf_vals).max()))
    assert is_martingale(closed, tol=1e-10 * (1 + np.abs(leaf_vals).max()))


def test_process_is_immutable():
    tree = one_step()
    proc = AdaptedProcess(tree, [[1.0], [2.0], [3.0]])
    with pytest.raises(ValueError):
        proc.values[0, 0] = 5.0
