import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conic_market.arbitrage import (
    check_na,
    check_nar,
    dominate,
    find_strictly_consistent_price,
    null_strategy_property,
)
from conic_market.cone import PolyCone, contains, in_relative_interior
from conic_market.dual import find_consistent_price, is_consistent
from conic_market.errors import EmptyEpsilonList, GeneratorFormCone, PreconditionViolated
from conic_market.fixtures import BUILDERS, binomial_frictionless
from conic_market.generators import chain, random_tree
from conic_market.io import instance_from_dict
from conic_market.market import Market, attain, is_admissible, terminal_wealth
from conic_market.tree import AdaptedProcess

NA_FIXTURES = ["binomial_frictionless", "binomial_bidask_1.01", "na_not_nar", "strict_cost_binomial",
               "strict_cost_cobb_douglas", "det_log", "binomial_power"]


def mispriced_binomial():
    inst = binomial_frictionless()
    # down-state stock price 1.5 > 1: buying the stock at the root never loses
    inst["cones"]["by_node"]["d"] = {"bidask": [[1, 1.5, 1], [1 / 1.5, 1, 2 / 1.5], [2, 3, 1]]}
    return instance_from_dict(inst).market


def test_cycle_arbitrage_with_verified_witness(fx):
    m = fx("arb_cycle").market
    rep = check_na(m)
    assert rep.verdict == "Arbitrage"
    x0 = np.zeros(m.m)
    assert is_admissible(m, rep.witness, x0)
    W = terminal_wealth(m, x0, rep.witness)
    assert W.min() >= -1e-8
    assert W.sum() > 1e-6


@pytest.mark.parametrize("name", NA_FIXTURES)
def test_no_arbitrage_fixtures(fx, name):
    rep = check_na(fx(name).market)
    assert rep.verdict == "NoArbitrage"
    assert rep.value <= 1e-7


def test_profitable_project_without_costs_is_arbitrage(fx):
    # sqrt(a) - a/2 > 0 for small a and the industrial asset sells back at cost
    assert check_na(fx("non_cone").market).arbitrage


def test_non_martingale_price_is_arbitrage_and_not_robust():
    m = mispriced_binomial()
    assert check_na(m).arbitrage
    assert check_nar(m, [0.5, 0.1]).verdict == "Arbitrage"


def test_check_na_invariant_under_relabeling(fx):
    m = fx("arb_cycle").market
    tree = m.tree.relabel({"0": "root", "1": "leaf"})
    cones = [PolyCone(c.generators[::-1]) for c in m.cones]
    assert check_na(Market(tree, cones, m.returns)).verdict == "Arbitrage"
    b = fx("strict_cost_binomial").market
    relabeled = Market(b.tree.relabel({"0": "0", "u": "up", "d": "down"}), b.cones, b.returns)
    assert check_na(relabeled).verdict == "NoArbitrage"


def test_dominate_examples(fx):
    m = fx("strict_cost_binomial").market
    dm = dominate(m, 0.5)
    for small, big in zip(m.cones, dm.cones):
        assert all(contains(big, g) for g in small.generators)
    zero = np.zeros(m.N)
    for node in range(1, m.tree.n_nodes):
        assert np.allclose(dm.returns.evaluate(node, zero), 0)
        inc = dm.returns.evaluate(node, np.ones(m.N)) - m.returns.evaluate(node, np.ones(m.N))
        assert in_relative_interior(m.kbar(node), inc)
        assert np.abs(inc).sum() == pytest.approx(0.5)


def test_dominate_rejects_generator_cones():
    m = fx_generator_market()
    with pytest.raises(GeneratorFormCone):
        dominate(m, 0.1)


def fx_generator_market():
    inst = BUILDERS["arb_cycle"]()
    inst["cones"] = {"default": {"generators": [[1, 0], [0, 1], [1.2, -1], [-1, 1.2]]}}
    return instance_from_dict(inst).market


@pytest.mark.parametrize("name", ["strict_cost_binomial", "strict_cost_cobb_douglas", "binomial_bidask_1.01"])
def test_strict_cost_markets_are_robust(fx, name):
    rep = check_nar(fx(name).market, [0.1, 0.5])
    assert rep.verdict == "RobustNA"
    assert "family" in rep.note


def test_boundary_fixture_is_not_robust(fx):
    rep = check_nar(fx("na_not_nar").market)
    assert rep.base.verdict == "NoArbitrage"
    assert rep.by_epsilon[0.5].verdict == "Arbitrage"
    assert rep.verdict == "NotRobust"


def test_empty_epsilon_list(fx):
    with pytest.raises(EmptyEpsilonList):
        check_nar(fx("strict_cost_binomial").market, [])


def test_strictly_consistent_price_examples(fx):
    Z = find_strictly_consistent_price(fx("strict_cost_binomial").market)
    assert Z is not None and Z.margin > 1e-7
    assert is_consistent(Z, fx("strict_cost_binomial").market)
    assert find_strictly_consistent_price(fx("arb_cycle").market) is None


def test_frictionless_one_state_price():
    inst = BUILDERS["arb_cycle"]()
    s = 1.7
    inst["cones"] = {"default": {"bidask": [[1, s], [1 / s, 1]]}}
    m = instance_from_dict(inst).market
    Z, delta = find_consistent_price(m, allow_zero_margin=True)
    assert np.allclose(Z.values, [[1, s], [1, s]])
    assert delta > 0


@pytest.mark.parametrize("name", NA_FIXTURES)
def test_dominated_cones_admit_a_price_system(fx, name):
    dm = dominate(fx(name).market, 0.1)
    Z, _ = find_consistent_price(dm, allow_zero_margin=True)
    assert Z is not None


def test_null_strategy_examples(fx):
    m = fx("binomial_frictionless").market
    zero = AdaptedProcess.zeros(m.tree, m.m)
    assert null_strategy_property(m, zero, np.zeros(m.m), 0)
    # frictionless pair: swap 1 -> 2 at t = 0 and back at t = 1
    pair = instance_from_dict(chain(T=1, d=2, N=1, cost=1.0, kappa=2.0)).market
    swap = AdaptedProcess(pair.tree, [[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0]])
    assert np.abs(swap.values).max() > 0
    assert null_strategy_property(pair, swap, np.zeros(3), 1)
    roundtrip = np.zeros((m.tree.n_nodes, m.m))
    roundtrip[0] = [-1.0, 1.0, 0.0]
    roundtrip[1:] = [[0.5, -1.0, 0.0], [2.0, -1.0, 0.0]]
    plan = AdaptedProcess(m.tree, roundtrip)
    with pytest.raises(PreconditionViolated):
        null_strategy_property(m, plan, np.zeros(m.m), 1)


def test_null_strategy_rejects_unreached_target(fx):
    m = fx("strict_cost_binomial").market
    with pytest.raises(PreconditionViolated):
        null_strategy_property(m, AdaptedProcess.zeros(m.tree, m.m), np.ones(m.m), 1)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 1000))
def test_zero_reaching_plans_are_null_in_robust_markets(seed):
    inst = random_tree(T=1, branching=2, d=2, N=1, seed=seed)
    m = instance_from_dict(inst).market
    if check_nar(m, [0.1]).verdict != "RobustNA":
        return
    res = attain(m, np.zeros(m.m), np.zeros(m.m), solid=True)
    assert res.attainable
    plan = np.where(np.abs(res.plan.values) < 1e-10, 0.0, res.plan.values)
    assert null_strategy_property(m, AdaptedProcess(m.tree, plan), np.zeros(m.m), 1)


@pytest.mark.parametrize("seed", [0, 3, 7])
def test_cobb_douglas_arbitrage_found_quickly(seed):
    # infinite marginal product at zero beats the linear cost: always an arbitrage
    from conic_market.generators import with_return

    m = instance_from_dict(with_return(random_tree(T=2, d=2, seed=seed), "cobb_douglas")).market
    rep = check_na(m)
    assert rep.arbitrage
    assert rep.iterations < 50
    assert is_admissible(m, rep.witness, np.zeros(m.m))
    assert terminal_wealth(m, np.zeros(m.m), rep.witness).min() >= -1e-8
