import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conic_market.cone import PolyCone, contains, from_bid_ask
from conic_market.errors import DimensionMismatch, InstanceError, NotAdmissible
from conic_market.market import (
    Market,
    attain,
    check_R_axioms,
    convex_combine_plans,
    encode_attainability,
    investment_level,
    investment_levels,
    is_admissible,
    is_attainable,
    is_consumption_feasible,
    terminal_wealth,
)
from conic_market.returns import CobbDouglasReturn, LinearReturn, OracleReturn
from conic_market.tree import AdaptedProcess, build_tree

from conftest import random_buy_plan, random_cd_market


def chain(T=1, d=1, N=1):
    return build_tree({"T": T, "d": d, "N": N,
                       "nodes": [(str(t), t, None if t == 0 else str(t - 1), 1.0) for t in range(T + 1)]})


def frictionless(tree, returns=None):
    return Market(tree, [from_bid_ask(np.ones((2, 2)))] * tree.n_nodes, returns)


def test_investment_level_examples():
    tree = chain()
    m = frictionless(tree)
    plan = AdaptedProcess(tree, [[-2, 1], [0.5, -1]])
    assert investment_level(m, plan, 0)[0] == 1
    assert investment_level(m, plan, 1)[0] == 0
    assert np.all(investment_levels(m, AdaptedProcess.zeros(tree, 2)) == 0)
    long = chain(T=2)
    plan = AdaptedProcess(long, [[0, 1], [0, 1], [0, 1]])
    assert np.allclose(investment_levels(frictionless(long), plan)[:, 0], [1, 2, 3])


def test_admissibility_examples():
    tree = chain()
    m = Market(tree, [from_bid_ask([[1, 1.1], [1.1, 1]])] * 2)
    zero = AdaptedProcess.zeros(tree, 2)
    assert is_admissible(m, zero, [3.0, 0.5])
    assert is_admissible(m, AdaptedProcess(tree, [[-1.1, 1], [0, 0]]), [0, 0])
    assert not is_admissible(m, AdaptedProcess(tree, [[0, -1], [0, 0]]), [0, 0])


def test_solid_relaxes_terminal_industrial_level():
    tree = chain()
    m = frictionless(tree)
    plan = AdaptedProcess(tree, [[0, 0], [2, -2]])
    assert not is_admissible(m, plan, [0, 1])
    assert is_admissible(m, plan, [0, 1], solid=True)


def test_terminal_wealth_cobb_douglas_example():
    tree = chain()
    R = CobbDouglasReturn(tree, [0.5], p=1.0, eta=[0.0])
    m = frictionless(tree, R)
    plan = AdaptedProcess(tree, [[-1, 1], [0, 0]])
    assert np.allclose(terminal_wealth(m, [1, 0], plan), [[1, 1]])


def test_terminal_wealth_identity_cases():
    tree = chain(T=2)
    m = frictionless(tree)
    x = np.array([0.7, 0.2])
    assert np.allclose(terminal_wealth(m, x, AdaptedProcess.zeros(tree, 2)), [x])
    plan = AdaptedProcess(tree, [[-1, 1], [1, -1], [0, 0]])
    with pytest.raises(NotAdmissible):
        terminal_wealth(m, [0, 0], AdaptedProcess(tree, [[0, -1], [0, 0], [0, 0]]))
    assert np.allclose(terminal_wealth(m, x, plan), [x])


def test_terminal_wealth_shifts_with_financial_endowment():
    m = random_cd_market(3)
    plan = random_buy_plan(m, np.random.default_rng(0))
    x = np.array([0.0, 0.0, 0.5])
    base = terminal_wealth(m, x, plan)
    shifted = terminal_wealth(m, x + [0.3, -0.2, 0.0], plan)
    assert np.allclose(shifted - base, [0.3, -0.2, 0.0])


def test_check_R_axioms_cobb_douglas_and_linear():
    m = random_cd_market(1)
    assert check_R_axioms(m, sample_count=60).passed
    tree = chain()
    lin = frictionless(tree, LinearReturn(tree, [[0.3], [0.0]]))
    assert check_R_axioms(lin, sample_count=20).passed


def test_check_R_axioms_flags_nonzero_at_origin():
    tree = chain()
    R = OracleReturn(tree, lambda n, a: np.array([1.0, 0.0]), lambda n, a: np.zeros((2, 1)))
    report = check_R_axioms(frictionless(tree, R), sample_count=10)
    assert not report.r1
    assert not report.passed


def test_convex_combination_linear_has_no_compensator():
    tree = chain()
    m = frictionless(tree, LinearReturn(tree, [[0.2], [0.0]]))
    a = AdaptedProcess(tree, [[-1, 1], [0, 0]])
    b = AdaptedProcess(tree, [[-3, 3], [0, 0]])
    plan, rho = convex_combine_plans(m, a, b, [0, 0], 0.25)
    assert np.allclose(rho.values, 0)
    assert np.allclose(plan.values, 0.25 * a.values + 0.75 * b.values)
    same, _ = convex_combine_plans(m, a, b, [0, 0], 1.0)
    assert np.allclose(same.values, a.values)


@pytest.mark.parametrize("seed", range(5))
def test_convex_combination_cobb_douglas_reaches_the_mixture(seed):
    m = random_cd_market(seed)
    rng = np.random.default_rng(seed)
    x = np.array([1.0, 0.0, 0.2])
    a, b = random_buy_plan(m, rng), random_buy_plan(m, rng, 3.0)
    eps = 0.5
    plan, rho = convex_combine_plans(m, a, b, x, eps)
    want = eps * terminal_wealth(m, x, a) + (1 - eps) * terminal_wealth(m, x, b)
    assert is_admissible(m, plan, x)
    assert np.allclose(terminal_wealth(m, x, plan), want, atol=1e-9)
    for i in range(m.tree.n_nodes):
        assert contains(m.kbar(i), -rho.values[i], tol=1e-9)


def test_attainability_examples():
    tree = chain()
    m = frictionless(tree)
    x = np.array([1.0, 0.0])
    assert is_attainable(m, x, x)
    assert not is_attainable(m, x, x + [1.0, 0.0])
    assert not is_attainable(m, x, [1.0, -1.0])


def test_plan_output_is_its_own_certificate():
    m = random_cd_market(2)
    plan = random_buy_plan(m, np.random.default_rng(2))
    x = np.array([0.5, 0.0, 0.1])
    g = terminal_wealth(m, x, plan)
    res = attain(m, x, g)
    assert res.attainable
    assert is_admissible(m, res.plan, x)
    assert np.allclose(terminal_wealth(m, x, res.plan), g, atol=1e-8)


def test_solid_attainability_hand_instance():
    tree = chain()
    m = frictionless(tree)
    x = np.array([0.0, 1.0])
    assert is_attainable(m, x, [1.0, 0.0]) and is_attainable(m, x, [1.0, 0.0], solid=True)
    assert not is_attainable(m, x, [2.0, -1.0])
    assert is_attainable(m, x, [2.0, -1.0], solid=True)


def test_attainability_checks_shapes():
    m = frictionless(chain())
    with pytest.raises(DimensionMismatch):
        encode_attainability(m, [1.0, 0.0], [[1.0, 0.0, 0.0]])


@pytest.mark.parametrize("c, ok", [([0.4, 0.6], True), ([0.6, 0.6], False), ([0.0, 0.0], True)])
def test_consumption_feasibility(c, ok):
    m = frictionless(chain())
    assert is_consumption_feasible(m, [1.0, 0.0], np.array(c)[:, None]) is ok


def test_market_rejects_cone_without_interior_orthant():
    tree = chain()
    flat = PolyCone([(1, 0), (0, 1)])
    with pytest.raises(InstanceError):
        Market(tree, [flat, flat])


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(0, 40))
def test_convex_combination_property(eps, seed):
    m = random_cd_market(seed, T=1)
    rng = np.random.default_rng(seed)
    x = np.array([0.0, 0.0, 1.0])
    a, b = random_buy_plan(m, rng, 0.1), random_buy_plan(m, rng, 5.0)
    plan, _ = convex_combine_plans(m, a, b, x, eps)
    want = eps * terminal_wealth(m, x, a) + (1 - eps) * terminal_wealth(m, x, b)
    assert np.allclose(terminal_wealth(m, x, plan), want, atol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 30), st.floats(1.0, 50.0))
def test_scaling_relation_cobb_douglas(seed, eta):
    m = random_cd_market(seed, T=1)
    rng = np.random.default_rng(seed)
    for node in range(1, m.tree.n_nodes):
        alpha = rng.uniform(0, 3, size=m.N)
        v = m.returns.evaluate(node, eta * alpha) / eta - m.returns.evaluate(node, alpha)
        assert contains(m.kbar(node), -v, tol=1e-9)
