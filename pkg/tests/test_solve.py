import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conic_market.cone import PolyCone
from conic_market.solve import (
    ConvexProgram,
    SolverConfig,
    Status,
    farkas_margin,
    maximize_concave,
    solve_lp,
    to_standard_form,
)


def sqrt_term(y):
    def fn(z):
        c = max(z[0], 0.0)
        if c <= 0:
            return 0.0, np.array([1e8])
        return 2 * np.sqrt(c) - y * c, np.array([1 / np.sqrt(c) - y])
    return fn


def log_term(z):
    return float(np.log(z[0])), np.array([1.0 / z[0]])


def test_lp_bounded():
    prog = ConvexProgram()
    x = prog.add_vars(1, lb=0)
    prog.add_le(x, [1.0], 3.0)
    prog.add_objective(x, 1.0)
    res = solve_lp(prog)
    assert res.status is Status.OPTIMAL
    assert res.value == pytest.approx(3.0)
    assert res.certificate["dual_value"] == pytest.approx(res.value, abs=1e-9)
    assert res.verified


def test_lp_infeasible_cone_membership_has_farkas_certificate():
    prog = ConvexProgram()
    x = prog.add_vars(2)
    prog.add_eq(x[:1], [1.0], 0.0)
    prog.add_eq(x[1:], [1.0], -1.0)
    prog.add_cone(x, PolyCone([(1, 0), (0, 1), (1.1, -1)]))
    res = solve_lp(prog)
    assert res.status is Status.INFEASIBLE
    cert = res.certificate
    assert cert is not None and cert["margin"] > 1e-9
    std = to_standard_form(prog)
    assert farkas_margin(std, cert) > 1e-9


def test_lp_unbounded_ray():
    prog = ConvexProgram()
    x = prog.add_vars(1, lb=0)
    prog.add_objective(x, 1.0)
    res = solve_lp(prog)
    assert res.status is Status.UNBOUNDED
    assert res.certificate["direction"][0] > 0


def test_cutting_plane_sqrt():
    prog = ConvexProgram()
    c = prog.add_vars(1, lb=0, ub=10)
    prog.add_concave_objective(c, sqrt_term(1.0))
    res = maximize_concave(prog)
    assert res.ok
    assert res.value == pytest.approx(1.0, abs=1e-7)
    assert res.x[0] == pytest.approx(1.0, abs=1e-3)
    assert all(a >= b - 1e-12 for a, b in zip(res.upper_bounds, res.upper_bounds[1:]))


def test_linear_program_same_through_both_paths():
    prog = ConvexProgram()
    x = prog.add_vars(2, lb=0, ub=5)
    prog.add_le(x, [1.0, 2.0], 4.0)
    prog.add_objective(x, [1.0, 1.0])
    a = solve_lp(prog)
    b = maximize_concave(prog)
    assert a.value == pytest.approx(b.value, abs=1e-9)


def test_log_consumption_split():
    prog = ConvexProgram()
    c = prog.add_vars(2, lb=0.001, ub=10)
    prog.add_le(c, [1.0, 1.0], 1.0)
    for i in c:
        prog.add_concave_objective([i], log_term)
    res = maximize_concave(prog)
    assert res.ok and res.verified
    assert res.value == pytest.approx(2 * np.log(0.5), abs=1e-6)
    assert np.allclose(res.x, [0.5, 0.5], atol=1e-3)


def test_concave_constraint():
    # maximize x subject to sqrt(y) - x >= 0, y <= 4
    prog = ConvexProgram()
    v = prog.add_vars(2, lb=[0, 0], ub=[10, 4])
    prog.add_objective(v[:1], 1.0)

    def f(z):
        x, y = z
        y = max(y, 1e-16)
        return np.sqrt(y) - x, np.array([-1.0, min(0.5 / np.sqrt(y), 1e8)])

    prog.add_concave_constraint(v, f)
    res = maximize_concave(prog)
    assert res.ok and res.verified
    assert res.value == pytest.approx(2.0, abs=1e-6)


def test_infeasible_concave_constraint():
    prog = ConvexProgram()
    v = prog.add_vars(1, lb=0, ub=4)
    prog.add_concave_constraint(v, lambda z: (np.sqrt(max(z[0], 1e-16)) - 3.0,
                                              np.array([min(0.5 / np.sqrt(max(z[0], 1e-16)), 1e8)])))
    res = maximize_concave(prog)
    assert res.status is Status.INFEASIBLE


def test_unbounded_by_box_growth():
    prog = ConvexProgram()
    v = prog.add_vars(1, lb=0, box=10.0)
    prog.add_concave_objective(v, lambda z: (float(np.log1p(z[0])), np.array([1 / (1 + z[0])])))
    res = maximize_concave(prog, SolverConfig(gap_tol=1e-8))
    assert res.status is Status.UNBOUNDED


def test_bounded_despite_active_box():
    prog = ConvexProgram()
    v = prog.add_vars(1, lb=0, box=10.0)
    prog.add_concave_objective(v, lambda z: (1 - float(np.exp(-z[0])), np.array([np.exp(-z[0])])))
    res = maximize_concave(prog)
    assert res.ok
    assert res.value == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.lists(st.floats(0.5, 4), min_size=3, max_size=3))
def test_lp_strong_duality(c, caps):
    prog = ConvexProgram()
    x = prog.add_vars(3, lb=-1)
    prog.add_le(x, [1.0, 1.0, 1.0], sum(caps))
    for i in range(3):
        prog.add_le(x[i:i + 1], [1.0], caps[i])
    prog.add_objective(x, c)
    res = solve_lp(prog)
    assert res.ok and res.verified
    assert res.certificate["dual_value"] == pytest.approx(res.value, abs=1e-7)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 5.0))
def test_cutting_plane_matches_calculus(y):
    prog = ConvexProgram()
    c = prog.add_vars(1, lb=0, ub=100)
    prog.add_concave_objective(c, sqrt_term(y))
    res = maximize_concave(prog)
    assert res.ok
    assert res.value == pytest.approx(1.0 / y, abs=1e-6)
