"""No-arbitrage, robust no-arbitrage, and strictly consistent price systems.

Arbitrage is a plan from zero endowment whose terminal position lies in
R_+^{d+N} and is nonzero.  The detector maximizes the expected mass of the
terminal position, capped at one, over such plans.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cone import contains, from_bid_ask, in_relative_interior, relative_interior_point, shrink_costs
from .dual import PriceSystem, find_consistent_price
from .errors import EmptyEpsilonList, GeneratorFormCone, PreconditionViolated, SolverFailure
from .market import (
    BOX_FACTOR,
    Attainability,
    Market,
    investment_levels,
    is_admissible,
    terminal_wealth,
)
from .returns import DominatedReturn
from .solve import ConvexProgram, SolverConfig, Status, maximize_concave, solve_lp
from .tree import AdaptedProcess

NA_TOL = 1e-7
WITNESS_MASS = 1e-6
WITNESS_FLOOR = 1e-8
POLISH_EVERY = 5
DEFAULT_EPSILONS = (0.5, 0.1, 0.01)
NA_CONFIG = SolverConfig(feas_tol=1e-10, gap_tol=1e-9)


@dataclass
class NAReport:
    verdict: str  # "NoArbitrage" | "Arbitrage"
    value: float
    witness: AdaptedProcess | None = None
    terminal: np.ndarray | None = None
    iterations: int = 0
    note: str = ""

    @property
    def arbitrage(self) -> bool:
        return self.verdict == "Arbitrage"

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict, "value": self.value, "iterations": self.iterations}
        if self.witness is not None:
            out["witness"] = self.witness.to_dict()
            out["terminal"] = self.terminal.tolist()
        if self.note:
            out["note"] = self.note
        return out


def _polish(market: Market, xi: np.ndarray) -> AdaptedProcess | None:
    """Best financial transfers given the industrial trades of ``xi``.

    With the industrial trades fixed the returns are constants, so the
    remaining problem is an LP; its optimum is an exact candidate plan.
    """
    tree = market.tree
    d, m = market.d, market.m
    trades = xi[:, d:]
    levels = tree.ancestors @ trades
    if levels.min(initial=0.0) < -1e-9:
        return None
    const = np.zeros((tree.n_nodes, m))
    for i in range(1, tree.n_nodes):
        const[i] = market.returns.evaluate(i, np.maximum(levels[tree.parent[i]], 0.0))
    prog = ConvexProgram()
    v = np.array([prog.add_vars(m) for _ in range(tree.n_nodes)])
    for i in range(tree.n_nodes):
        prog.add_cone(v[i], market.cones[i], sign=-1.0)
        for j in range(market.N):
            prog.add_eq([v[i][d + j]], [1.0], trades[i, j])
    w = tree.leaf_probs()
    gvars = []
    for leaf in tree.leaves:
        path = tree.path(leaf)
        g = prog.add_vars(m, lb=0.0)
        gvars.append(g)
        for r in range(m):
            # g_r = sum over the path of transfers plus the fixed returns
            prog.add_eq([g[r]] + [v[n][r] for n in path], [1.0] + [-1.0] * len(path),
                        float(sum(const[n][r] for n in path)))
    idx = np.concatenate(gvars)
    coef = np.repeat(w, m)
    prog.add_le(idx, coef, 1.0)
    prog.add_objective(idx, coef)
    res = solve_lp(prog, NA_CONFIG)
    if not res.ok or res.value <= WITNESS_MASS:
        return None
    return AdaptedProcess(tree, res.x[v])


def check_na(market: Market, box_factor: float = BOX_FACTOR, config: SolverConfig = NA_CONFIG) -> NAReport:
    """Decide NA; on arbitrage, return a witness plan that has been re-verified."""
    tree = market.tree
    m = market.m
    att = Attainability(market, np.zeros(market.N), solid=False, box=box_factor)
    P = att.prog
    w = tree.leaf_probs()
    gvars = []
    for k in range(len(tree.leaves)):
        g = P.add_vars(m, lb=0.0, box=box_factor)
        gvars.append(g)
        att.set_target(k, np.zeros(m), None, [{int(g[r]): 1.0} for r in range(m)])
    idx = np.concatenate(gvars)
    coef = np.repeat(w, m)
    P.add_le(idx, coef, 1.0)
    P.add_objective(idx, coef)
    x0 = np.zeros(m)
    found = {}
    calls = [0]

    def verified_witness(plan):
        if not is_admissible(market, plan, x0):
            return None
        W = terminal_wealth(market, x0, plan, check=False)
        if W.min() < -WITNESS_FLOOR or float(w @ W.sum(axis=1)) <= WITNESS_MASS:
            return None
        return W

    def decided(z, ub):
        # only the verdict matters: stop once the bound clears the threshold
        # or the transfers of a relaxation point already form an arbitrage
        if ub <= NA_TOL:
            return True
        calls[0] += 1
        xi = np.asarray(z[att.xi])
        candidates = [AdaptedProcess(tree, xi)]
        if calls[0] % POLISH_EVERY == 1 and not market.returns.identically_zero:
            polished = _polish(market, xi)
            if polished is not None:
                candidates.append(polished)
        for plan in candidates:
            W = verified_witness(plan)
            if W is not None:
                found["plan"], found["W"] = plan, W
                return True
        return False

    res = maximize_concave(P, config, stop=decided)
    if res.status is Status.STOPPED:
        if "plan" in found:
            W = found["W"]
            return NAReport("Arbitrage", min(1.0, float(w @ W.sum(axis=1))), found["plan"], W, res.iterations,
                            note="value is the mass of the verified witness, a lower bound on the optimum")
        return NAReport("NoArbitrage", max(float(res.value), 0.0), iterations=res.iterations)
    if not res.ok:
        raise SolverFailure(f"arbitrage program ended with {res.status.value}")
    if res.value <= NA_TOL:
        return NAReport("NoArbitrage", max(float(res.value), 0.0), iterations=res.iterations)
    plan = att.extract_plan(res.x)
    W = verified_witness(plan)
    if W is None:
        raise SolverFailure("arbitrage witness failed the re-check")
    return NAReport("Arbitrage", float(res.value), plan, W, res.iterations)


def dominate(market: Market, epsilon: float) -> Market:
    """Market with costs shrunk by ``epsilon`` and returns raised by epsilon * min(1, |a|_1) * w_n.

    ``w_n`` is a relative-interior point of the node's financial section.
    """
    mats = market.bidask
    if mats is None:
        raise GeneratorFormCone("dominating markets are built from bid-ask matrices")
    cache = {}
    cones = []
    for pi in mats:
        new = shrink_costs(pi, epsilon)
        key = new.tobytes()
        if key not in cache:
            cache[key] = from_bid_ask(new)
        cones.append(cache[key])
    tree = market.tree
    dirs = []
    for i in range(tree.n_nodes):
        kbar = market.kbar(i)
        dirs.append(relative_interior_point(kbar) if tree.time[i] >= 1 and not kbar.is_zero else None)
    returns = DominatedReturn(market.returns, epsilon, dirs)
    return Market(tree, cones, returns, name=market.name)


@dataclass
class NARReport:
    verdict: str  # "RobustNA" | "NotRobust" | "Arbitrage"
    base: NAReport
    by_epsilon: dict = field(default_factory=dict)
    note: str = "robustness is tested within the shrink-and-raise family only"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "base": self.base.to_dict(),
                "by_epsilon": {f"{e:g}": r.to_dict() for e, r in self.by_epsilon.items()},
                "note": self.note}


def check_nar(market: Market, epsilons: Sequence[float] = DEFAULT_EPSILONS,
              box_factor: float = BOX_FACTOR, config: SolverConfig = NA_CONFIG, jobs: int = 1) -> NARReport:
    """NA for the dominating markets at each epsilon; robust iff NA at the smallest one."""
    eps = [float(e) for e in epsilons]
    if not eps:
        raise EmptyEpsilonList("need at least one epsilon")
    base = check_na(market, box_factor, config)
    order = sorted(eps, reverse=True)

    def run(e):
        return check_na(dominate(market, e), box_factor, config)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as ex:
            results = dict(zip(order, ex.map(run, order)))
    else:
        results = {e: run(e) for e in order}
    if base.arbitrage:
        verdict = "Arbitrage"
    else:
        verdict = "RobustNA" if not results[min(eps)].arbitrage else "NotRobust"
    return NARReport(verdict, base, results)


def find_strictly_consistent_price(market: Market, allow_zero_margin: bool = False,
                                   leaf_weights=None) -> PriceSystem | None:
    return find_consistent_price(market, allow_zero_margin, leaf_weights)[0]


def null_strategy_property(market: Market, plan, target, t0: int, tol: float = 1e-8) -> bool:
    """For a solid-admissible plan from zero whose terminal wealth is an
    F_{t0}-measurable element of the financial section at t0: check that
    investment is zero, each transfer lies in the lineality of the node's
    financial section, and the target lies in the lineality at t0.

    Raises :class:`PreconditionViolated` if the plan or target does not
    qualify.
    """
    tree = market.tree
    x0 = np.zeros(market.m)
    vals = plan.values if isinstance(plan, AdaptedProcess) else np.asarray(plan, float)
    target = np.asarray(target, float)
    if target.ndim == 1:
        target = np.tile(target, (len(tree.leaves), 1))
    if not (0 <= t0 <= tree.T):
        raise PreconditionViolated("t0 out of range")
    if not is_admissible(market, vals, x0, solid=True, tol=tol):
        raise PreconditionViolated("plan is not admissible from zero")
    W = terminal_wealth(market, x0, vals, check=False)
    if np.abs(W - target).max() > tol:
        raise PreconditionViolated("plan does not reach the target")
    anc_t0 = {}
    for k, leaf in enumerate(tree.leaves):
        a = next(n for n in tree.path(leaf) if tree.time[n] == t0)
        if a in anc_t0:
            if np.abs(anc_t0[a] - target[k]).max() > tol:
                raise PreconditionViolated("target is not measurable at t0")
        else:
            anc_t0[a] = target[k]
        if not contains(market.kbar(a), target[k], tol=tol):
            raise PreconditionViolated("target is not in the financial section at t0")

    def in_lineality(cone, v):
        B = cone.lineality_basis
        resid = v - (B.T @ (B @ v) if B.shape[0] else 0.0)
        return float(np.abs(resid).max()) <= tol * max(1.0, float(np.abs(v).max()))

    if np.abs(investment_levels(market, vals)).max() > tol:
        return False
    for i in range(tree.n_nodes):
        if not in_lineality(market.kbar(i), vals[i]):
            return False
    return all(in_lineality(market.kbar(a), v) for a, v in anc_t0.items())


def relative_interior_ok(market: Market) -> bool:
    """Every t >= 1 direction used by :func:`dominate` is relatively interior."""
    tree = market.tree
    return all(in_relative_interior(market.kbar(i), relative_interior_point(market.kbar(i)))
               for i in range(tree.n_nodes) if tree.time[i] >= 1 and not market.kbar(i).is_zero)
