"""Utilities, their Fenchel transforms, and the consumption problem with its dual.

The primal value is u(x) = sup E[sum_t U_t(c_t)] over consumption plans whose
accumulated withdrawals are attainable from x.  The dual side is searched
over price-system-induced variables Y = y Z^F (with Z_0^1 = 1), which gives
an upper bound on the conjugate value function; the conjugate relation
w(y) = sup_x [u_1(x) - x y] supplies the matching lower bound.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .cone import contains
from .errors import DimensionMismatch, InstanceError, NoFiniteCandidate, UnsupportedVariant
from .returns import SLOPE_CAP
from .market import BOX_FACTOR, Attainability, Market, default_box, is_consumption_feasible
from .solve import ConvexProgram, SolverConfig, Status, maximize_concave
from .tree import AdaptedProcess

log = logging.getLogger(__name__)

LOG_BARRIER = 1e-9
DIVERGENCE_CEILING = 1e9
UTILITY_CONFIG = SolverConfig(feas_tol=1e-9, gap_tol=1e-9)


@dataclass(frozen=True)
class Utility1D:
    """scale * U(c) + const with U = ln or U = c^p / p."""

    kind: str
    p: float = 0.5
    scale: float = 1.0
    const: float = 0.0

    def __post_init__(self):
        if self.kind not in ("log", "power"):
            raise UnsupportedVariant(f"unknown one-dimensional utility {self.kind!r}")
        if self.kind == "power" and not (0.0 < self.p < 1.0):
            raise InstanceError("power utility needs p in (0, 1)")
        if self.scale <= 0:
            raise InstanceError("utility scale must be positive")

    def value(self, c: float) -> float:
        if self.kind == "log":
            return -np.inf if c <= 0 else self.scale * np.log(c) + self.const
        return self.scale * max(c, 0.0) ** self.p / self.p + self.const

    def deriv(self, c: float) -> float:
        if c <= 0:
            return np.inf
        if self.kind == "log":
            return self.scale / c
        return self.scale * c ** (self.p - 1.0)

    def argmax(self, y: float) -> float:
        """Maximizer of U(c) - c y over c >= 0 (inf when y = 0)."""
        if y <= 0:
            return np.inf
        if self.kind == "log":
            return self.scale / y
        return (y / self.scale) ** (1.0 / (self.p - 1.0))

    def conj(self, y: float) -> float:
        """sup_{c >= 0} U(c) - c y."""
        if y <= 0:
            return np.inf
        z = y / self.scale
        if self.kind == "log":
            base = -np.log(z) - 1.0
        else:
            base = (1.0 - self.p) / self.p * z ** (self.p / (self.p - 1.0))
        return self.scale * base + self.const

    def conj_deriv(self, y: float) -> float:
        return -self.argmax(y)

    def truncated_conj(self, y: float, n: float) -> float:
        """sup over 0 <= c <= n of U(c) - c y."""
        c = min(self.argmax(y), n)
        return self.value(c) - c * y

    def to_dict(self) -> dict:
        return {"u": self.kind, "p": self.p, "scale": self.scale, "const": self.const}


def asymptotic_elasticity(u: Utility1D) -> float:
    """limsup_{x -> inf} x U'(x) / U(x), in closed form."""
    if not isinstance(u, Utility1D):
        raise UnsupportedVariant("asymptotic elasticity is only available for Power and Log")
    return float(u.p) if u.kind == "power" else 0.0


@dataclass(frozen=True)
class UtilityFamily:
    """U_t for t = 0..T on R_+^d.

    ``coordinate_sum``: U_t(c) = sum_i u_t(c^i).  ``first_coordinate``:
    U_t(c) = u_t(c^1).
    """

    variant: str
    per_time: tuple
    d: int

    def __post_init__(self):
        if self.variant not in ("coordinate_sum", "first_coordinate"):
            raise UnsupportedVariant(f"unknown utility variant {self.variant!r}")

    @classmethod
    def discounted(cls, variant: str, u: Utility1D, T: int, d: int, beta: float = 1.0) -> "UtilityFamily":
        per = tuple(Utility1D(u.kind, u.p, u.scale * beta ** t, u.const) for t in range(T + 1))
        return cls(variant, per, d)

    def coords(self) -> list[int]:
        return list(range(self.d)) if self.variant == "coordinate_sum" else [0]

    def u(self, t: int) -> Utility1D:
        return self.per_time[t]

    def _check(self, v):
        v = np.asarray(v, float).ravel()
        if v.shape != (self.d,):
            raise DimensionMismatch(f"expected a vector of length {self.d}")
        return v


def utility_value(U: UtilityFamily, t: int, c) -> float:
    c = U._check(c)
    if np.any(c < 0):
        return -np.inf
    u = U.u(t)
    return float(sum(u.value(c[i]) for i in U.coords()))


def utility_supergradient(U: UtilityFamily, t: int, c) -> np.ndarray:
    c = U._check(c)
    g = np.zeros(U.d)
    for i in U.coords():
        g[i] = U.u(t).deriv(c[i])
    return g


def fenchel(U: UtilityFamily, t: int, y) -> float:
    """Ũ_t(y) = sup_{c >= 0} U_t(c) - c.y."""
    y = U._check(y)
    if np.any(y < 0):
        return np.inf
    u = U.u(t)
    return float(sum(u.conj(y[i]) for i in U.coords()))


def truncated_fenchel(U: UtilityFamily, t: int, y, n: float) -> float:
    """Same supremum over the box 0 <= c^i <= n."""
    if n <= 0:
        raise ValueError("truncation level must be positive")
    y = U._check(y)
    u = U.u(t)
    total = 0.0
    for i in range(U.d):
        if i in U.coords():
            total += u.truncated_conj(y[i], n)
        else:
            # coordinates without utility: consuming costs y^i, so c^i = 0 unless y^i < 0
            total += max(0.0, -y[i] * n)
    return float(total)


@dataclass
class GrowthReport:
    estimates: dict
    refined: dict
    passed: bool

    def to_dict(self):
        return {"estimates": self.estimates, "refined": self.refined, "passed": self.passed}


def _growth_sup(U, t, lam, grid):
    best = -np.inf
    for y in grid:
        vec = np.full(U.d, y)
        num = fenchel(U, t, lam * vec)
        den = 1.0 + max(fenchel(U, t, vec), 0.0)
        best = max(best, num / den)
    return best


def check_growth_condition(U: UtilityFamily, t: int, lambdas: Sequence[float], grid=None) -> GrowthReport:
    """Estimate C^lambda = sup_y Ũ(lambda y) / (1 + Ũ(y)^+) on a geometric grid."""
    if grid is None:
        grid = np.geomspace(1e-8, 1e2, 200)
    grid = np.asarray(grid, float)
    fine = np.geomspace(grid.min(), grid.max(), 2 * len(grid))
    est, ref = {}, {}
    ok = True
    for lam in lambdas:
        if not (0.0 < lam <= 1.0):
            raise ValueError("lambda must lie in (0, 1]")
        a, b = _growth_sup(U, t, lam, grid), _growth_sup(U, t, lam, fine)
        est[float(lam)], ref[float(lam)] = a, b
        if not (np.isfinite(a) and np.isfinite(b)) or abs(b - a) > 0.1 * max(abs(a), 1e-12):
            ok = False
    return GrowthReport(est, ref, ok)


def utility_from_dict(spec: Mapping[str, Any], T: int, d: int) -> UtilityFamily:
    allowed = {"kind", "u", "p", "beta", "scale", "const"}
    extra = set(spec) - allowed
    if extra:
        raise InstanceError(f"unknown utility fields: {sorted(extra)}")
    u = Utility1D(spec.get("u", "log"), float(spec.get("p", 0.5)), float(spec.get("scale", 1.0)),
                  float(spec.get("const", 0.0)))
    return UtilityFamily.discounted(spec.get("kind", "coordinate_sum"), u, T, d, float(spec.get("beta", 1.0)))


def utility_to_dict(U: UtilityFamily) -> dict:
    u0 = U.per_time[0]
    beta = U.per_time[1].scale / u0.scale if len(U.per_time) > 1 else 1.0
    return {"kind": U.variant, "u": u0.kind, "p": u0.p, "scale": u0.scale, "const": u0.const, "beta": beta}


# primal ----------------------------------------------------------------------


@dataclass
class PrimalResult:
    value: float
    status: str
    consumption: AdaptedProcess | None = None
    plan: AdaptedProcess | None = None
    iterations: int = 0
    gap: float = float("nan")

    def to_dict(self, tree) -> dict:
        out = {"value": _num(self.value), "status": self.status, "gap": _num(self.gap)}
        if self.consumption is not None:
            out["consumption"] = self.consumption.to_dict()
            out["plan"] = self.plan.to_dict()
        return out


def _num(v):
    v = float(v)
    if np.isnan(v):
        return None
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _term(u: Utility1D):
    # the slope at zero is infinite for both kinds; cap it like the returns do
    def fn(z):
        c = z[0]
        return u.value(c), np.array([min(u.deriv(c), SLOPE_CAP)])
    return fn


def interior_liquidation(market: Market, x) -> float:
    """Largest delta with x - (delta 1_d, 0_N) in K_0 (capped at |x|_inf + 1)."""
    x = np.asarray(x, float)
    prog = ConvexProgram()
    dv = prog.add_vars(1, lb=-np.inf, ub=float(np.abs(x).max(initial=0.0)) + 1.0)
    v = prog.add_vars(market.m)
    for r in range(market.m):
        coef = [1.0, 1.0] if r < market.d else [1.0]
        idx = [v[r], dv[0]] if r < market.d else [v[r]]
        prog.add_eq(idx, coef, x[r])
    prog.add_cone(v, market.cones[0])
    prog.add_objective(dv, 1.0)
    res = maximize_concave(prog)
    return float(res.value) if res.ok else -np.inf


def _consumption_program(market: Market, U: UtilityFamily, x, box: float, x1_var: bool = False):
    tree = market.tree
    d = market.d
    x = np.asarray(x, float)
    att = Attainability(market, x[d:], solid=False, box=box)
    prog = att.prog
    cvars = np.zeros((tree.n_nodes, d), int)
    log_coords = U.u(0).kind == "log"
    for i in range(tree.n_nodes):
        lb = np.zeros(d)
        if log_coords:
            lb[U.coords()] = LOG_BARRIER
        cvars[i] = prog.add_vars(d, lb=lb, box=box)
        for j in U.coords():
            prog.add_concave_objective([cvars[i][j]], _term(U.u(int(tree.time[i]))), weight=tree.prob[i])
    x1 = None
    if x1_var:
        x1 = int(prog.add_vars(1, lb=0.0, box=box)[0])
    for k, leaf in enumerate(tree.leaves):
        terms = [dict() for _ in range(market.m)]
        for n in tree.path(leaf):
            for j in range(d):
                terms[j][int(cvars[n][j])] = terms[j].get(int(cvars[n][j]), 0.0) + 1.0
        if x1 is not None:
            # W_k(x) + x1 e_1 = target  <=>  W_k(x) = target - x1 e_1
            terms[0][x1] = terms[0].get(x1, 0.0) - 1.0
        att.set_target(k, x, None, terms)
    start = np.ones(prog.n)
    prog.start = start
    return att, cvars, x1


def solve_primal(market: Market, U: UtilityFamily, x, box_factor: float = BOX_FACTOR,
                 config: SolverConfig = UTILITY_CONFIG) -> PrimalResult:
    """Maximize E[sum_t U_t(c_t)] over consumption attainable from x."""
    x = np.asarray(x, float)
    if x.shape != (market.m,):
        raise DimensionMismatch(f"endowment must have length {market.m}")
    box = default_box(x, None, box_factor)
    att, cvars, _ = _consumption_program(market, U, x, box)
    delta = interior_liquidation(market, x)
    if delta > 0:
        # the liquidate-then-spread plan is feasible; start the cuts there
        start = np.ones(att.prog.n)
        start[cvars.ravel()] = delta / 2 / (market.tree.T + 1)
        att.prog.start = start
    res = maximize_concave(att.prog, config)
    if res.status is Status.INFEASIBLE:
        return PrimalResult(-np.inf, "Infeasible", iterations=res.iterations)
    if res.status is Status.UNBOUNDED:
        return PrimalResult(np.inf, "Unbounded", iterations=res.iterations)
    if res.status is not Status.OPTIMAL:
        return PrimalResult(res.value, res.status.value, iterations=res.iterations, gap=res.gap)
    c = np.maximum(res.x[cvars], 0.0)
    if U.u(0).kind == "log" and np.any(c[:, U.coords()] <= LOG_BARRIER * (1 + 1e-6)):
        return PrimalResult(-np.inf, "BarrierActive", iterations=res.iterations)
    if res.value > DIVERGENCE_CEILING:
        return PrimalResult(np.inf, "Diverged", iterations=res.iterations)
    cons = AdaptedProcess(market.tree, c)
    plan = att.extract_plan(res.x)
    return PrimalResult(res.value, "Optimal", cons, plan, res.iterations, res.gap)


def expected_utility(market: Market, U: UtilityFamily, c) -> float:
    vals = c.values if isinstance(c, AdaptedProcess) else np.asarray(c, float)
    tree = market.tree
    return float(sum(tree.prob[i] * utility_value(U, int(tree.time[i]), vals[i]) for i in range(tree.n_nodes)))


def verify_consumption(market: Market, U: UtilityFamily, x, result: PrimalResult) -> tuple[bool, float]:
    """Fresh feasibility check of c* and its recomputed objective."""
    feasible = is_consumption_feasible(market, x, result.consumption)
    return feasible, expected_utility(market, U, result.consumption)


def solve_u1(market: Market, U: UtilityFamily, x1: float, **kw) -> PrimalResult:
    if x1 < 0:
        raise ValueError("x1 must be nonnegative")
    x = np.zeros(market.m)
    x[0] = x1
    return solve_primal(market, U, x, **kw)


def conjugate_value(market: Market, U: UtilityFamily, y: float, box_factor: float = BOX_FACTOR,
                    config: SolverConfig = UTILITY_CONFIG) -> float:
    """sup_{x1 >= 0} u_1(x1) - x1 y as one joint program (x1 a variable)."""
    box = default_box(np.ones(1), None, box_factor) / max(y, 1e-3)
    att, cvars, x1 = _consumption_program(market, U, np.zeros(market.m), box, x1_var=True)
    att.prog.add_objective([x1], -y)
    res = maximize_concave(att.prog, config)
    if res.status is Status.UNBOUNDED:
        return np.inf
    if not res.ok:
        return -np.inf
    return float(res.value)


# dual --------------------------------------------------------------------------


@dataclass
class DualVariable:
    Z: AdaptedProcess
    y: float
    a: float

    @property
    def Y(self) -> np.ndarray:
        d = self.Z.tree.d
        return self.y / self.Z.values[0, 0] * self.Z.values[:, :d]

    @property
    def alpha(self) -> float:
        return self.y / self.Z.values[0, 0] * self.a


@dataclass
class DualResult:
    value: float
    best: DualVariable | None
    candidates_finite: int
    upper_bound: bool = True
    iterations: int = 0


def dual_objective(market: Market, U: UtilityFamily, dv: DualVariable) -> float:
    tree = market.tree
    Y = dv.Y
    total = sum(tree.prob[i] * fenchel(U, int(tree.time[i]), Y[i]) for i in range(tree.n_nodes))
    return float(total + dv.alpha)


def _cps_polytope(market: Market, prog: ConvexProgram, lb_coords=(), lb_value=1e-12):
    """Variables Z_n with full martingale, Z_n in K_n^*, Z_0^1 = 1."""
    tree = market.tree
    m = market.m
    Z = np.zeros((tree.n_nodes, m), int)
    for i in range(tree.n_nodes):
        lb = np.zeros(m)
        lb[list(lb_coords)] = lb_value
        Z[i] = prog.add_vars(m, lb=lb)
        G = market.cones[i].generators
        for g in G:
            nz = np.flatnonzero(g)
            prog.add_le(Z[i][nz], -g[nz], 0.0)
    for i in range(tree.n_nodes):
        kids = tree.children[i]
        if not kids:
            continue
        q = tree.q[list(kids)]
        for r in range(m):
            prog.add_eq([Z[i][r]] + [Z[k][r] for k in kids], [-1.0] + q.tolist(), 0.0)
    prog.add_eq([Z[0][0]], [1.0], 1.0)
    return Z


def _conj_term(u: Utility1D, y: float, weight: float):
    """z -> -weight * Ũ(y z): concave in z > 0."""
    def fn(z):
        v = max(z[0], 1e-300)
        val = -weight * u.conj(y * v)
        grad = weight * y * min(u.argmax(y * v), SLOPE_CAP)
        return val, np.array([grad])
    return fn


def solve_dual(market: Market, U: UtilityFamily, y: float, candidates: Sequence[AdaptedProcess] = (),
               config: SolverConfig = UTILITY_CONFIG) -> DualResult:
    """Upper bound on the conjugate value: min over Z of E[sum Ũ_t(y Z_t^F)] + y a(0; Z)."""
    from .dual import support_value  # local import keeps module layering one-directional

    if y < 0:
        raise ValueError("y must be nonnegative")
    if y == 0:
        return DualResult(np.inf, None, 0)
    tree = market.tree
    zero_R = market.returns.identically_zero

    best_val, best_dv = np.inf, None
    finite = 0
    for Zc in candidates:
        Zc = Zc if isinstance(Zc, AdaptedProcess) else AdaptedProcess(tree, Zc)
        a = 0.0 if zero_R else support_value(np.zeros(market.N), Zc, market)
        if not np.isfinite(a):
            continue
        finite += 1
        dv = DualVariable(Zc, y, a)
        val = dual_objective(market, U, dv)
        if val < best_val:
            best_val, best_dv = val, dv

    prog = ConvexProgram()
    Z = _cps_polytope(market, prog, lb_coords=U.coords(), lb_value=1e-12)
    for i in range(tree.n_nodes):
        u = U.u(int(tree.time[i]))
        for j in U.coords():
            prog.add_concave_objective([Z[i][j]], _conj_term(u, y, tree.prob[i]))
    if not zero_R:
        leaf_idx = np.concatenate([Z[l] for l in tree.leaves])

        def neg_a(z):
            Zfull = np.zeros((tree.n_nodes, market.m))
            Zfull[list(tree.leaves)] = z.reshape(len(tree.leaves), market.m)
            val, gstar = support_value(np.zeros(market.N), Zfull, market, return_argmax=True)
            if not np.isfinite(val):
                raise NoFiniteCandidate("support functional is infinite at a dual iterate")
            grad = -(tree.leaf_probs()[:, None] * gstar).ravel()
            return -val * y, grad * y

        prog.add_concave_objective(leaf_idx, neg_a)
    start = np.ones(prog.n)
    prog.start = start
    res = maximize_concave(prog, config)
    iters = res.iterations
    if res.ok:
        Zv = AdaptedProcess(tree, res.x[Z])
        a = 0.0 if zero_R else support_value(np.zeros(market.N), Zv, market)
        if np.isfinite(a):
            finite += 1
            dv = DualVariable(Zv, y, a)
            val = dual_objective(market, U, dv)
            if val < best_val:
                best_val, best_dv = val, dv
    if best_dv is None:
        raise NoFiniteCandidate("no dual candidate with finite support functional")
    return DualResult(best_val, best_dv, finite, True, iters)


@dataclass
class GapRow:
    y: float
    w_y: float
    dual_y: float

    @property
    def gap(self) -> float:
        return self.dual_y - self.w_y


@dataclass
class GapReport:
    rows: list = field(default_factory=list)
    tolerance: float = 1e-7

    @property
    def weak_duality_ok(self) -> bool:
        return all(r.gap >= -self.tolerance for r in self.rows)

    def to_csv(self) -> str:
        lines = ["y,w_y,dual_y,gap"]
        for r in self.rows:
            lines.append(f"{r.y:.12g},{r.w_y:.12g},{r.dual_y:.12g},{r.gap:.12g}")
        return "\n".join(lines) + "\n"


def duality_gap(market: Market, U: UtilityFamily, y_grid: Sequence[float], x_grid: Sequence[float] | None = None,
                jobs: int = 1) -> GapReport:
    """Tabulate w(y) = sup_x u_1(x) - x y against the dual search value."""
    y_grid = [float(v) for v in y_grid]
    if not y_grid:
        raise ValueError("y grid must be nonempty")
    u1_grid = []
    if x_grid is not None and len(x_grid):
        u1_grid = [(float(x1), solve_u1(market, U, float(x1)).value) for x1 in x_grid]

    def row(y):
        w = conjugate_value(market, U, y)
        for x1, v in u1_grid:
            w = max(w, v - x1 * y)
        return GapRow(y, w, solve_dual(market, U, y).value)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as ex:
            rows = list(ex.map(row, y_grid))
    else:
        rows = [row(y) for y in y_grid]
    return GapReport(rows)
