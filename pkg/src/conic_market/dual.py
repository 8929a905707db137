"""Consistent price systems, the support functional, and super-hedging prices.

For a price system Z and measure P~, the support functional is

    a(x^I; Z) = sup { E[Z_T . g] : g in A^s_T((0_d, x^I)) },

and any g in A^s_T(x) satisfies E[Z_T . g] - Z_0^F . x^F - a(x^I; Z) <= 0.
Super-hedging prices are computed directly as convex programs and bracketed
from below by this inequality over candidate price systems.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cone import contains, dual_contains
from .errors import Infeasible, InconsistentCandidate, SolverFailure, Unbounded
from .market import BOX_FACTOR, Attainability, Market, default_box, _leaf_target
from .solve import ConvexProgram, SolverConfig, Status, maximize_concave, solve_lp
from .tree import AdaptedProcess, is_martingale

MARGIN_TOL = 1e-7
CONSISTENCY_TOL = 1e-9
NUDGE = 1e-6
SUPPORT_CONFIG = SolverConfig(feas_tol=1e-9, gap_tol=1e-9)


@dataclass
class PriceSystem:
    Z: AdaptedProcess
    leaf_weights: np.ndarray | None = None
    margin: float = 0.0

    @property
    def values(self) -> np.ndarray:
        return self.Z.values

    def to_dict(self) -> dict:
        out = {"Z": self.Z.to_dict(), "margin": self.margin}
        if self.leaf_weights is not None:
            out["leaf_weights"] = self.leaf_weights.tolist()
        return out


def _values(Z) -> np.ndarray:
    if isinstance(Z, PriceSystem):
        return Z.values
    if isinstance(Z, AdaptedProcess):
        return Z.values
    return np.asarray(Z, float)


def _weights(market: Market, leaf_weights) -> np.ndarray:
    return market.tree.leaf_probs() if leaf_weights is None else np.asarray(leaf_weights, float)


def consistency_report(Z, market: Market, tol: float = CONSISTENCY_TOL, leaf_weights=None) -> dict:
    """The four membership conditions, checked separately."""
    vals = _values(Z)
    tree = market.tree
    d = market.d
    node_w = tree.node_weights(leaf_weights)
    report = {"financial_ri_dual": True, "terminal_dual": True, "martingale": True, "terminal_positive": True}
    for i in range(tree.n_nodes):
        kbar = market.kbar(i)
        y = np.concatenate([vals[i, :d], np.zeros(market.N)])
        basis = kbar.lineality_basis
        if basis.shape[0] and np.abs(basis @ y).max() > tol * max(1.0, np.abs(y).max()):
            report["financial_ri_dual"] = False
        rev = kbar.reversible
        for g, r in zip(kbar.generators, rev):
            if not r and y @ g < tol * np.linalg.norm(g):
                report["financial_ri_dual"] = False
    for leaf in tree.leaves:
        z = vals[leaf]
        if not dual_contains(market.cones[leaf], z, tol) or not np.any(z):
            report["terminal_dual"] = False
        if np.any(z <= tol):
            report["terminal_positive"] = False
    fin = AdaptedProcess(tree, vals[:, :d])
    scale = max(1.0, float(np.abs(vals).max()))
    if not is_martingale(fin, tol=tol * scale, node_weights=node_w if leaf_weights is not None else None):
        report["martingale"] = False
    return report


def is_consistent(Z, market: Market, tol: float = CONSISTENCY_TOL, leaf_weights=None) -> bool:
    return all(consistency_report(Z, market, tol, leaf_weights).values())


def _cps_variables(market: Market, prog: ConvexProgram, node_w=None):
    tree = market.tree
    m = market.m
    Z = np.zeros((tree.n_nodes, m), int)
    for i in range(tree.n_nodes):
        Z[i] = prog.add_vars(m)
    for i in range(tree.n_nodes):
        kids = list(tree.children[i])
        if not kids:
            continue
        q = tree.q[kids] if node_w is None else node_w[kids] / node_w[i]
        for r in range(m):
            prog.add_eq([Z[i][r]] + [Z[k][r] for k in kids], [-1.0] + q.tolist(), 0.0)
    prog.add_eq([Z[0][0]], [1.0], 1.0)
    return Z


def find_consistent_price(market: Market, allow_zero_margin: bool = False, leaf_weights=None):
    """Margin LP: Z a martingale (all coordinates), Z_n . g >= delta |g| for
    non-reversible generators g of K_n, Z_n . v = 0 on the lineality of K_n,
    Z_0^1 = 1; maximize delta in [0, 1].

    Returns ``(PriceSystem, delta)`` or ``(None, delta)``.
    """
    tree = market.tree
    node_w = None if leaf_weights is None else tree.node_weights(leaf_weights)
    prog = ConvexProgram()
    Z = _cps_variables(market, prog, node_w)
    delta = prog.add_vars(1, lb=0.0, ub=1.0)[0]
    for i in range(tree.n_nodes):
        cone = market.cones[i]
        for g, rev in zip(cone.generators, cone.reversible):
            nz = np.flatnonzero(g)
            if rev:
                prog.add_eq(Z[i][nz], g[nz], 0.0)
            else:
                prog.add_le(np.concatenate([Z[i][nz], [delta]]), np.concatenate([-g[nz], [np.linalg.norm(g)]]), 0.0)
    prog.add_objective([delta], 1.0)
    res = solve_lp(prog)
    if res.status is Status.INFEASIBLE:
        return None, 0.0
    if not res.ok:
        raise SolverFailure(f"price-system LP ended with {res.status.value}")
    dstar = float(res.x[delta])
    if dstar <= MARGIN_TOL and not allow_zero_margin:
        return None, dstar
    lw = None if leaf_weights is None else np.asarray(leaf_weights, float)
    return PriceSystem(AdaptedProcess(tree, res.x[Z]), lw, dstar), dstar


def support_value(xI, Z, market: Market, leaf_weights=None, return_argmax: bool = False,
                  box_factor: float = BOX_FACTOR, config: SolverConfig = SUPPORT_CONFIG):
    """a(x^I; Z): sup of E[Z_T . g] over the solid attainable set from (0_d, x^I)."""
    vals = _values(Z)
    tree = market.tree
    xI = np.asarray(xI, float)
    x = np.concatenate([np.zeros(market.d), xI])
    w = _weights(market, leaf_weights)
    leafZ = vals[list(tree.leaves)]
    att = Attainability(market, xI, solid=True, box=default_box(x, None, box_factor))
    weights = w[:, None] * leafZ
    att.wealth_objective(weights)
    att.prog.const = float(np.sum(weights @ x))
    res = maximize_concave(att.prog, config)
    if res.status is Status.UNBOUNDED:
        return (np.inf, None) if return_argmax else np.inf
    if not res.ok:
        raise SolverFailure(f"support functional ended with {res.status.value}")
    if not return_argmax:
        return float(res.value)
    gstar = np.array([[x[r] + sum(c * res.x[v] for v, c in form.items()) for r, form in enumerate(forms)]
                      for forms in att.wealth])
    return float(res.value), gstar


def expectation(market: Market, Z, g, leaf_weights=None) -> float:
    vals = _values(Z)
    g = _leaf_target(market, g)
    w = _weights(market, leaf_weights)
    return float(np.sum(w * np.einsum("kr,kr->k", vals[list(market.tree.leaves)], g)))


def superhedge_dual_bound(market: Market, g, x, candidates: Sequence, leaf_weights=None,
                          check: bool = True) -> tuple[float, int]:
    """max over candidates of E[Z_T . g] - Z_0^F . x^F - a(x^I; Z); returns (bound, index)."""
    if not candidates:
        raise ValueError("candidate list is empty")
    x = np.asarray(x, float)
    best, arg = -np.inf, -1
    for k, Z in enumerate(candidates):
        lw = Z.leaf_weights if isinstance(Z, PriceSystem) and Z.leaf_weights is not None else leaf_weights
        if check and not is_consistent(Z, market, leaf_weights=lw):
            raise InconsistentCandidate(f"candidate {k} is not a consistent price system")
        a = support_value(x[market.d:], Z, market, lw)
        if not np.isfinite(a):
            continue
        vals = _values(Z)
        v = expectation(market, Z, g, lw) - vals[0, :market.d] @ x[:market.d] - a
        if v > best:
            best, arg = v, k
    if arg < 0:
        raise InconsistentCandidate("no candidate has a finite support functional")
    return best, arg


def price_lower_bound(market: Market, g, x_base, candidates: Sequence, leaf_weights=None,
                      direction=None) -> tuple[float, int]:
    """Lower bound on the super-hedging price along ``direction`` (default e_1)."""
    x_base = np.asarray(x_base, float)
    direction = np.eye(market.m)[0] if direction is None else np.asarray(direction, float)
    best, arg = -np.inf, -1
    for k, Z in enumerate(candidates):
        lw = Z.leaf_weights if isinstance(Z, PriceSystem) and Z.leaf_weights is not None else leaf_weights
        if not is_consistent(Z, market, leaf_weights=lw):
            raise InconsistentCandidate(f"candidate {k} is not a consistent price system")
        a = support_value(x_base[market.d:], Z, market, lw)
        if not np.isfinite(a):
            continue
        vals = _values(Z)
        scale = vals[0] @ direction
        v = (expectation(market, Z, g, lw) - vals[0, :market.d] @ x_base[:market.d] - a) / scale
        if v > best:
            best, arg = v, k
    return best, arg


def lower_bound_constant(market: Market, g) -> float:
    """Smallest c with g + c e_1 in K_T at every leaf."""
    g = _leaf_target(market, g)
    worst = -np.inf
    for k, leaf in enumerate(market.tree.leaves):
        prog = ConvexProgram()
        c = prog.add_vars(1)
        v = prog.add_vars(market.m)
        for r in range(market.m):
            idx = [v[r], c[0]] if r == 0 else [v[r]]
            prog.add_eq(idx, [1.0, -1.0] if r == 0 else [1.0], g[k, r])
        prog.add_cone(v, market.cones[leaf])
        prog.add_objective(c, -1.0)
        res = solve_lp(prog)
        if not res.ok:
            raise SolverFailure("could not bound the claim from below")
        worst = max(worst, float(res.x[c[0]]))
    return worst


def check_bounded_below(market: Market, g, c: float) -> bool:
    g = _leaf_target(market, g)
    e1 = np.eye(market.m)[0]
    return all(contains(market.cones[leaf], g[k] + c * e1, tol=1e-9 * max(1.0, abs(c)))
               for k, leaf in enumerate(market.tree.leaves))


@dataclass
class SuperhedgePrimal:
    price: float
    plan: AdaptedProcess
    iterations: int


def superhedge_price(market: Market, g, x_base=None, direction=None, constant: float | None = None,
                     box_factor: float = BOX_FACTOR, config: SolverConfig = SUPPORT_CONFIG) -> SuperhedgePrimal:
    """Smallest s with g in A^s_T(x_base + s * direction)."""
    g = _leaf_target(market, g)
    x_base = np.zeros(market.m) if x_base is None else np.asarray(x_base, float)
    direction = np.eye(market.m)[0] if direction is None else np.asarray(direction, float)
    c = lower_bound_constant(market, g) if constant is None else float(constant)
    if not check_bounded_below(market, g, c):
        raise ValueError("claim is not bounded below by the declared constant")
    box = default_box(x_base, g, box_factor)
    att = Attainability(market, x_base[market.d:], solid=True, box=box)
    s = int(att.prog.add_vars(1, box=box)[0])
    for k in range(len(market.tree.leaves)):
        terms = [dict() for _ in range(market.m)]
        for r in range(market.m):
            if direction[r] != 0:
                terms[r][s] = -direction[r]
        att.set_target(k, x_base, g[k], terms)
    att.prog.add_objective([s], -1.0)
    res = maximize_concave(att.prog, config)
    if res.status is Status.INFEASIBLE:
        raise Infeasible("the claim cannot be super-hedged along this direction")
    if res.status is Status.UNBOUNDED:
        raise Unbounded("super-hedging price is minus infinity")
    if not res.ok:
        raise SolverFailure(f"super-hedging program ended with {res.status.value}")
    plan = att.extract_plan(res.x)
    return SuperhedgePrimal(float(res.x[s]), plan, res.iterations)


def closed_cps_maximizer(market: Market, g, x_base, leaf_weights=None) -> PriceSystem | None:
    """Z in the closed price polytope maximizing E[Z_T . g] - Z_0^F . x^F (a ignored)."""
    tree = market.tree
    node_w = None if leaf_weights is None else tree.node_weights(leaf_weights)
    g = _leaf_target(market, g)
    w = _weights(market, leaf_weights)
    prog = ConvexProgram()
    Z = _cps_variables(market, prog, node_w)
    for i in range(tree.n_nodes):
        for gen in market.cones[i].generators:
            nz = np.flatnonzero(gen)
            prog.add_le(Z[i][nz], -gen[nz], 0.0)
    for k, leaf in enumerate(tree.leaves):
        prog.add_objective(Z[leaf], w[k] * g[k])
    prog.add_objective(Z[0][:market.d], -np.asarray(x_base, float)[:market.d])
    res = solve_lp(prog)
    if not res.ok:
        return None
    return PriceSystem(AdaptedProcess(tree, res.x[Z]), leaf_weights, 0.0)


def nudge(Z: PriceSystem, interior: PriceSystem, eps: float = NUDGE) -> PriceSystem:
    """(1 - eps) Z + eps Z°, strictly consistent when Z° is."""
    vals = (1 - eps) * Z.values + eps * interior.values
    return PriceSystem(AdaptedProcess(Z.Z.tree, vals), Z.leaf_weights, eps * interior.margin)


def dual_candidates(market: Market, g, x_base, leaf_weights=None) -> list[PriceSystem]:
    interior, _ = find_consistent_price(market, leaf_weights=leaf_weights)
    if interior is None:
        return []
    out = [interior]
    best = closed_cps_maximizer(market, g, x_base, leaf_weights)
    if best is not None:
        out.insert(0, nudge(best, interior))
    return out


def superhedge(market: Market, g, x_base=None, constant: float | None = None,
               box_factor: float = BOX_FACTOR, config: SolverConfig = SUPPORT_CONFIG) -> dict:
    """Primal price, dual lower bound over candidates, and their gap."""
    g = _leaf_target(market, g)
    x_base = np.zeros(market.m) if x_base is None else np.asarray(x_base, float)
    primal = superhedge_price(market, g, x_base, constant=constant, box_factor=box_factor, config=config)
    cands = dual_candidates(market, g, x_base)
    if cands:
        dual, arg = price_lower_bound(market, g, x_base, cands)
        binding = cands[arg].to_dict() if arg >= 0 else None
    else:
        dual, binding = -np.inf, None
    return {
        "primal_price": primal.price,
        "dual_bound": dual,
        "gap": primal.price - dual,
        "certificate_plan": primal.plan.to_dict(),
        "binding_candidate": binding,
    }
