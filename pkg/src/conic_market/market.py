"""Markets (K, R) on a tree: plans, terminal wealth, and attainability programs.

Conventions: node indices follow ``tree`` order; a plan is an
:class:`AdaptedProcess` of dimension d+N; ``x`` is an endowment in
R^d x R_+^N; terminal quantities are arrays of shape (n_leaves, d+N)
ordered like ``tree.leaves``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cone import PolyCone, contains, financial_part, from_bid_ask, in_interior
from .errors import DimensionMismatch, InstanceError, NotAdmissible, SolverFailure
from .returns import NodeReturn, ReturnSpec, ZeroReturn
from .solve import ConvexProgram, SolverConfig, SolveResult, Status, maximize_concave
from .tree import AdaptedProcess, EventTree

ADMISSIBLE_TOL = 1e-8
WEALTH_TOL = 1e-8
BOX_FACTOR = 1e3

# attainability needs tight nonlinear feasibility so that the extracted plan
# reaches the target within WEALTH_TOL
ATTAIN_CONFIG = SolverConfig(feas_tol=1e-10, gap_tol=1e-9)


class Market:
    """A tree with one solvency cone per node and a return specification."""

    def __init__(self, tree: EventTree, cones: Sequence[PolyCone], returns: ReturnSpec | None = None,
                 validate: bool = True, name: str | None = None):
        if len(cones) != tree.n_nodes:
            raise DimensionMismatch("need one cone per node")
        m = tree.d + tree.N
        for c in cones:
            if c.dim != m:
                raise DimensionMismatch(f"cone of dimension {c.dim}, expected d + N = {m}")
        self.tree = tree
        self.cones = tuple(cones)
        self.returns = returns if returns is not None else ZeroReturn(tree.d, tree.N)
        self.name = name
        self._kbar: dict[int, PolyCone] = {}
        if validate:
            self.validate()

    @property
    def d(self) -> int:
        return self.tree.d

    @property
    def N(self) -> int:
        return self.tree.N

    @property
    def m(self) -> int:
        return self.tree.d + self.tree.N

    @property
    def bidask(self):
        """Per-node bid-ask matrices, or None if some cone is given by generators."""
        mats = [c.bidask for c in self.cones]
        return None if any(b is None for b in mats) else mats

    def kbar(self, node: int) -> PolyCone:
        """Financial section of the node's cone (cached per cone object)."""
        cone = self.cones[node]
        key = id(cone)
        if key not in self._kbar:
            self._kbar[key] = financial_part(cone, self.d, self.N)
        return self._kbar[key]

    def validate(self) -> None:
        seen = set()
        for i, cone in enumerate(self.cones):
            if id(cone) in seen:
                continue
            seen.add(id(cone))
            for e in np.eye(self.m):
                if not in_interior(cone, e):
                    raise InstanceError(
                        f"node {self.tree.ids[i]!r}: unit vector {e} not interior to the solvency cone"
                    )

    def reward(self, node: int) -> NodeReturn:
        return self.returns.at(node)

    def with_parts(self, cones=None, returns=None, validate: bool = True) -> "Market":
        return Market(self.tree, self.cones if cones is None else cones,
                      self.returns if returns is None else returns, validate=validate, name=self.name)


def bidask_market(tree: EventTree, pis, returns: ReturnSpec | None = None, name=None) -> Market:
    """Market whose node cones come from bid-ask matrices (one shared or one per node)."""
    pis = np.asarray(pis, float)
    if pis.ndim == 2:
        cone = from_bid_ask(pis)
        cones = [cone] * tree.n_nodes
    else:
        cache = {}
        cones = []
        for pi in pis:
            key = pi.tobytes()
            if key not in cache:
                cache[key] = from_bid_ask(pi)
            cones.append(cache[key])
    return Market(tree, cones, returns, name=name)


# plans -----------------------------------------------------------------------


def _as_plan(market: Market, plan) -> np.ndarray:
    vals = plan.values if isinstance(plan, AdaptedProcess) else np.asarray(plan, float)
    if vals.shape != (market.tree.n_nodes, market.m):
        raise DimensionMismatch(f"plan must have shape ({market.tree.n_nodes}, {market.m})")
    return vals


def _endowment(market: Market, x) -> np.ndarray:
    x = np.asarray(x, float).ravel()
    if x.shape != (market.m,):
        raise DimensionMismatch(f"endowment must have length {market.m}")
    return x


def investment_levels(market: Market, plan) -> np.ndarray:
    """I(xi) at every node: industrial coordinates summed along the root path."""
    vals = _as_plan(market, plan)
    return market.tree.ancestors @ vals[:, market.d:]


def investment_level(market: Market, plan, node: int) -> np.ndarray:
    return investment_levels(market, plan)[node]


def is_admissible(market: Market, plan, x, solid: bool = False, tol: float = ADMISSIBLE_TOL) -> bool:
    vals = _as_plan(market, plan)
    x = _endowment(market, x)
    tree = market.tree
    levels = investment_levels(market, vals) + x[market.d:]
    for i in range(tree.n_nodes):
        if not contains(market.cones[i], -vals[i], tol=tol * max(1.0, np.abs(vals[i]).max())):
            return False
        if solid and tree.time[i] == tree.T:
            continue
        if np.any(levels[i] < -tol):
            return False
    return True


def rewards(market: Market, plan, x) -> np.ndarray:
    """R_n(x^I + I(xi)_parent) at every node (zero at the root)."""
    vals = _as_plan(market, plan)
    x = _endowment(market, x)
    tree = market.tree
    levels = investment_levels(market, vals) + x[market.d:]
    out = np.zeros((tree.n_nodes, market.m))
    for i in range(1, tree.n_nodes):
        alpha = np.maximum(levels[tree.parent[i]], 0.0)
        out[i] = market.returns.evaluate(i, alpha)
    return out


def terminal_wealth(market: Market, x, plan, check: bool = True, solid: bool = False) -> np.ndarray:
    """x + sum of transfers + sum of rewards along each root-to-leaf path."""
    vals = _as_plan(market, plan)
    x = _endowment(market, x)
    if check and not is_admissible(market, vals, x, solid=solid):
        raise NotAdmissible("plan is not admissible for this endowment")
    tree = market.tree
    per_node = vals + rewards(market, vals, x)
    total = tree.ancestors @ per_node
    return x + total[list(tree.leaves)]


@dataclass
class AxiomReport:
    r1: bool
    r2: bool
    r3: bool
    scaling: bool
    samples: int
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.r1 and self.r2 and self.r3 and self.scaling

    def to_dict(self) -> dict:
        return {"passed": self.passed, "r1": self.r1, "r2": self.r2, "r3": self.r3, "scaling": self.scaling,
                "samples": self.samples, "failures": list(self.failures[:20])}


def _sample_alpha(rng, N, size):
    return 10.0 ** rng.uniform(-3, 2, size=(size, N))


def check_R_axioms(market: Market, sample_count: int = 100, seed: int = 0,
                   scaling_samples: int | None = None) -> AxiomReport:
    """Spot-check continuity/R(0)=0, K̄-concavity, the scaling relation and an affine minorant."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    tree, R = market.tree, market.returns
    N = market.N
    nodes = [i for i in range(tree.n_nodes) if tree.time[i] >= 1]
    fails = []
    r1 = r2 = r3 = sc = True
    n_scale = sample_count if scaling_samples is None else scaling_samples

    def in_minus_kbar(node, v):
        tol = 1e-9 * max(1.0, np.abs(v).max())
        return contains(market.kbar(node), -v, tol=tol)

    for i in nodes:
        zero = R.evaluate(i, np.zeros(N))
        if np.abs(zero).max() > 1e-12:
            r1 = False
            fails.append(f"R1: R(0) = {zero.tolist()} at node {tree.ids[i]!r}")
        for a in _sample_alpha(rng, N, max(1, sample_count // len(nodes))):
            direction = rng.normal(size=N)
            direction /= np.abs(direction).max()
            diffs = []
            for h in (1e-4, 1e-8, 1e-12):
                b = np.maximum(a + h * direction, 0.0)
                diffs.append(np.abs(R.evaluate(i, b) - R.evaluate(i, a)).max())
            if not (diffs[-1] <= diffs[0] and diffs[-1] <= max(0.5 * diffs[0], 1e-9)):
                r1 = False
                fails.append(f"R1: discontinuity near {a.tolist()} at node {tree.ids[i]!r}")
                break

    per_node = max(1, sample_count // len(nodes))
    for i in nodes:
        A, B = _sample_alpha(rng, N, per_node), _sample_alpha(rng, N, per_node)
        lam = rng.uniform(0, 1, size=per_node)
        for a, b, l in zip(A, B, lam):
            gap = l * R.evaluate(i, a) + (1 - l) * R.evaluate(i, b) - R.evaluate(i, l * a + (1 - l) * b)
            if not in_minus_kbar(i, gap):
                r2 = False
                fails.append(f"R2: concavity gap {gap.tolist()} at node {tree.ids[i]!r}")
                break

    per_node = max(1, n_scale // len(nodes))
    for i in nodes:
        A = _sample_alpha(rng, N, per_node)
        eta = 10.0 ** rng.uniform(0, 2, size=per_node)
        for a, e in zip(A, eta):
            v = R.evaluate(i, e * a) / e - R.evaluate(i, a)
            if not in_minus_kbar(i, v):
                sc = False
                fails.append(f"scaling: eta={e:.4g}, alpha={a.tolist()} at node {tree.ids[i]!r}")
                break

    for i in nodes:
        minorant = R.affine_minorant(i)
        A = _sample_alpha(rng, N, per_node)
        if minorant is not None:
            a0, L = minorant
            for a in A:
                v = R.evaluate(i, a) - a0 - L @ a
                if not in_minus_kbar(i, -v):
                    r3 = False
                    fails.append(f"R3: minorant violated at {a.tolist()} node {tree.ids[i]!r}")
                    break
        else:
            # no analytic minorant: growth along rays must stay at most linear
            for a in A:
                ratios = [np.abs(R.evaluate(i, t * a)).max() / t for t in (10.0, 100.0, 1000.0)]
                if ratios[2] > 2 * ratios[1] + 1.0:
                    r3 = False
                    fails.append(f"R3: superlinear growth along {a.tolist()} node {tree.ids[i]!r}")
                    break
    return AxiomReport(r1, r2, r3, sc, sample_count, fails)


def convex_combine_plans(market: Market, xi, xi_tilde, x, epsilon: float):
    """Plan reaching eps*terminal(xi) + (1-eps)*terminal(xi_tilde).

    Returns ``(plan, rho)`` where rho is the compensator added to the convex
    combination; rho_n lies in -K̄_n at every node.
    """
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError("epsilon must lie in [0, 1]")
    a, b = _as_plan(market, xi), _as_plan(market, xi_tilde)
    x = _endowment(market, x)
    for p in (a, b):
        if not is_admissible(market, p, x):
            raise NotAdmissible("both plans must be admissible")
    tree = market.tree
    xI = x[market.d:]
    la = investment_levels(market, a) + xI
    lb = investment_levels(market, b) + xI
    # rho has no industrial part, so the combined plan's levels are the mixture
    lc = epsilon * la + (1 - epsilon) * lb
    rho = np.zeros_like(a)
    for i in range(1, tree.n_nodes):
        p = tree.parent[i]
        rho[i] = (epsilon * market.returns.evaluate(i, np.maximum(la[p], 0))
                  + (1 - epsilon) * market.returns.evaluate(i, np.maximum(lb[p], 0))
                  - market.returns.evaluate(i, np.maximum(lc[p], 0)))
    plan = epsilon * a + (1 - epsilon) * b + rho
    return AdaptedProcess(tree, plan), AdaptedProcess(tree, rho)


# attainability programs -------------------------------------------------------


class Attainability:
    """Variables and constraints of the plan side of A_T(x) / A^s_T(x).

    Leaf wealth W_k = x + sum xi + sum r is kept as sparse linear forms;
    callers tie it to a target with :meth:`set_target`.
    """

    def __init__(self, market: Market, xI, solid: bool, box: float, prog: ConvexProgram | None = None):
        self.market = market
        self.solid = solid
        self.box = box
        self.prog = prog if prog is not None else ConvexProgram()
        tree = market.tree
        d, N, m = market.d, market.N, market.m
        self.xI = np.asarray(xI, float)
        P = self.prog
        n = tree.n_nodes
        self.xi = np.zeros((n, m), int)
        self.alpha = {}
        self.s: dict[int, list[int]] = {}
        for i in range(n):
            self.xi[i] = P.add_vars(m, box=box)
            P.add_cone(self.xi[i], market.cones[i], sign=-1.0)
        for i in range(n):
            path = tree.path(i)
            if not tree.is_leaf(i):
                a = P.add_vars(N, lb=0.0, box=box)
                self.alpha[i] = a
                for j in range(N):
                    idx = [a[j]] + [self.xi[k][d + j] for k in path]
                    P.add_eq(idx, [1.0] + [-1.0] * len(path), self.xI[j])
            elif not solid:
                for j in range(N):
                    idx = [self.xi[k][d + j] for k in path]
                    P.add_le(idx, [-1.0] * len(path), self.xI[j])
        # reward terms, attached to the child node
        self.reward_forms: dict[int, list[dict]] = {}
        for i in range(1, n):
            par = tree.parent[i]
            nr = market.reward(i)
            a = self.alpha[par]
            forms = [dict() for _ in range(m)]
            for r in range(m):
                for j in range(N):
                    if nr.linear[r, j] != 0:
                        forms[r][int(a[j])] = forms[r].get(int(a[j]), 0.0) + nr.linear[r, j]
            svars = []
            for term in nr.terms:
                sv = int(P.add_vars(1, box=box)[0])
                svars.append(sv)
                P.add_concave_constraint(np.concatenate([a, [sv]]), _hypograph(term.fn, N))
                for r in range(m):
                    if term.direction[r] != 0:
                        forms[r][sv] = forms[r].get(sv, 0.0) + term.direction[r]
            self.s[i] = svars
            self.reward_forms[i] = forms
        self.wealth: list[list[dict]] = []
        for leaf in tree.leaves:
            forms = [dict() for _ in range(m)]
            for k in tree.path(leaf):
                for r in range(m):
                    v = int(self.xi[k][r])
                    forms[r][v] = forms[r].get(v, 0.0) + 1.0
                    if k in self.reward_forms:
                        for var, coef in self.reward_forms[k][r].items():
                            forms[r][var] = forms[r].get(var, 0.0) + coef
            self.wealth.append(forms)

    def set_target(self, k: int, x_const, target_const=None, target_terms=None) -> None:
        """Add rows W_k(x_const) - target == 0 for leaf position ``k``.

        ``target_terms[r]`` is a dict {var: coef} added to the target side.
        """
        m = self.market.m
        x_const = np.asarray(x_const, float)
        tc = np.zeros(m) if target_const is None else np.asarray(target_const, float)
        for r in range(m):
            form = dict(self.wealth[k][r])
            if target_terms is not None:
                for var, coef in target_terms[r].items():
                    form[var] = form.get(var, 0.0) - coef
            idx = np.fromiter(form.keys(), int)
            coef = np.fromiter(form.values(), float)
            self.prog.add_eq(idx, coef, tc[r] - x_const[r])

    def wealth_objective(self, weights: np.ndarray) -> None:
        """Add sum_k weights[k] . W_k (without the constant x) to the objective."""
        for k, forms in enumerate(self.wealth):
            for r, form in enumerate(forms):
                w = weights[k, r]
                if w == 0:
                    continue
                for var, coef in form.items():
                    self.prog.add_objective([var], w * coef)

    def extract_plan(self, z: np.ndarray) -> AdaptedProcess:
        """Exact plan from a feasible point: under-reported rewards become disposals."""
        market = self.market
        tree = market.tree
        xi = np.array(z[self.xi])
        levels = tree.ancestors @ xi[:, market.d:] + self.xI
        plan = xi.copy()
        for i in range(1, tree.n_nodes):
            par = tree.parent[i]
            r = np.array([sum(coef * z[var] for var, coef in form.items()) for form in self.reward_forms[i]])
            plan[i] = xi[i] + r - market.returns.evaluate(i, np.maximum(levels[par], 0.0))
        return AdaptedProcess(tree, plan)


def _hypograph(fn, N):
    def g(z):
        val, grad = fn(z[:N])
        return val - z[N], np.concatenate([grad, [-1.0]])
    return g


def default_box(x, g=None, factor: float = BOX_FACTOR) -> float:
    mag = max(1.0, float(np.abs(np.asarray(x, float)).max(initial=0.0)))
    if g is not None:
        mag = max(mag, float(np.abs(np.asarray(g, float)).max(initial=0.0)))
    return factor * mag


@dataclass
class AttainEncoding:
    program: ConvexProgram
    att: Attainability
    x: np.ndarray
    target: np.ndarray

    def extract_plan(self, z) -> AdaptedProcess:
        return self.att.extract_plan(z)


def _leaf_target(market: Market, g) -> np.ndarray:
    g = np.asarray(g, float)
    nl = len(market.tree.leaves)
    if g.ndim == 1:
        g = np.tile(g, (nl, 1))
    if g.shape != (nl, market.m):
        raise DimensionMismatch(f"target must have shape ({nl}, {market.m})")
    return g


def encode_attainability(market: Market, x, g, solid: bool = False,
                         box_factor: float = BOX_FACTOR) -> AttainEncoding:
    x = _endowment(market, x)
    g = _leaf_target(market, g)
    att = Attainability(market, x[market.d:], solid, default_box(x, g, box_factor))
    for k in range(len(market.tree.leaves)):
        att.set_target(k, x, g[k])
    return AttainEncoding(att.prog, att, x, g)


@dataclass
class AttainResult:
    attainable: bool
    plan: AdaptedProcess | None
    result: SolveResult


def attain(market: Market, x, g, solid: bool = False, box_factor: float = BOX_FACTOR,
           config: SolverConfig = ATTAIN_CONFIG) -> AttainResult:
    """Decide g in A_T(x) (or A^s_T(x)) and return an exact plan when it is."""
    enc = encode_attainability(market, x, g, solid, box_factor)
    res = maximize_concave(enc.program, config)
    if res.status is Status.INFEASIBLE:
        return AttainResult(False, None, res)
    if res.status is not Status.OPTIMAL:
        raise SolverFailure(f"attainability program ended with status {res.status.value}")
    plan = enc.extract_plan(res.x)
    return AttainResult(True, plan, res)


def is_attainable(market: Market, x, g, solid: bool = False, box_factor: float = BOX_FACTOR) -> bool:
    return attain(market, x, g, solid, box_factor).attainable


def consumption_target(market: Market, c) -> np.ndarray:
    """Leaf targets (sum of consumption along the path, 0_N)."""
    vals = c.values if isinstance(c, AdaptedProcess) else np.asarray(c, float)
    tree = market.tree
    if vals.shape != (tree.n_nodes, market.d):
        raise DimensionMismatch(f"consumption must have shape ({tree.n_nodes}, {market.d})")
    if np.any(vals < 0):
        raise ValueError("consumption must be nonnegative")
    acc = (tree.ancestors @ vals)[list(tree.leaves)]
    return np.hstack([acc, np.zeros((len(tree.leaves), market.N))])


def encode_consumption(market: Market, x, c, box_factor: float = BOX_FACTOR) -> AttainEncoding:
    return encode_attainability(market, x, consumption_target(market, c), solid=False, box_factor=box_factor)


def is_consumption_feasible(market: Market, x, c, box_factor: float = BOX_FACTOR) -> bool:
    return is_attainable(market, x, consumption_target(market, c), solid=False, box_factor=box_factor)
