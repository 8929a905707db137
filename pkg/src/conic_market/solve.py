"""LP wrapper with certificates and a cutting-plane method for concave programs.

Programs are built incrementally with :class:`ConvexProgram`.  Linear parts
are handed to HiGHS; concave constraints and objective terms enter through
value/supergradient oracles and are outer-approximated by tangent cuts
(multi-cut Kelley).  Every result carries something checkable: dual
multipliers, a Farkas ray, an improving ray, or a feasible point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .cone import PolyCone, contains
from .errors import NumericalFailure

log = logging.getLogger(__name__)

Oracle = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class SolverConfig:
    lp_feas_tol: float = 1e-9
    feas_tol: float = 1e-7
    gap_tol: float = 1e-7
    iter_limit: int = 10_000
    box_expansions: int = 2
    dump_path: str | None = None


DEFAULT = SolverConfig()


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITER_LIMIT = "IterLimit"
    STOPPED = "Stopped"


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray | None = None
    value: float = float("nan")
    certificate: dict | None = None
    gap: float = float("nan")
    iterations: int = 0
    upper_bounds: list = field(default_factory=list)
    verified: bool = False

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class _Cone:
    idx: np.ndarray
    cone: PolyCone
    sign: float


@dataclass
class _Term:
    idx: np.ndarray
    fn: Oracle
    weight: float = 1.0


class ConvexProgram:
    """maximize c.x + const + sum_k w_k h_k(x[idx_k]) subject to linear rows,
    bounds, conic memberships sign*x[idx] in K, and f_j(x[idx_j]) >= 0."""

    def __init__(self):
        self.n = 0
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._art_lo: list[bool] = []
        self._art_hi: list[bool] = []
        self._c: list[float] = []
        self.const = 0.0
        self.eq_rows: list[tuple[np.ndarray, np.ndarray, float]] = []
        self.le_rows: list[tuple[np.ndarray, np.ndarray, float]] = []
        self.cones: list[_Cone] = []
        self.constraints: list[_Term] = []
        self.objective_terms: list[_Term] = []
        self.start: np.ndarray | None = None

    # construction -------------------------------------------------------
    def add_vars(self, k: int, lb=-np.inf, ub=np.inf, box: float | None = None) -> np.ndarray:
        """Append ``k`` variables.  ``box`` clips infinite bounds to [-box, box];
        those clipped bounds are artificial and may be enlarged by the solver."""
        idx = np.arange(self.n, self.n + k)
        self.n += k
        lb = np.broadcast_to(np.asarray(lb, float), (k,)).copy()
        ub = np.broadcast_to(np.asarray(ub, float), (k,)).copy()
        art_lo = np.zeros(k, bool)
        art_hi = np.zeros(k, bool)
        if box is not None:
            art_lo = ~np.isfinite(lb)
            art_hi = ~np.isfinite(ub)
            lb[art_lo] = -box
            ub[art_hi] = box
        self._lb.extend(lb.tolist())
        self._ub.extend(ub.tolist())
        self._art_lo.extend(art_lo.tolist())
        self._art_hi.extend(art_hi.tolist())
        self._c.extend([0.0] * k)
        return idx

    def add_objective(self, idx, coef) -> None:
        for i, a in zip(np.atleast_1d(idx), np.broadcast_to(coef, np.shape(np.atleast_1d(idx)))):
            self._c[int(i)] += float(a)

    def add_eq(self, idx, coef, rhs: float) -> None:
        self.eq_rows.append((np.asarray(idx, int), np.asarray(coef, float), float(rhs)))

    def add_le(self, idx, coef, rhs: float) -> None:
        self.le_rows.append((np.asarray(idx, int), np.asarray(coef, float), float(rhs)))

    def add_cone(self, idx, cone: PolyCone, sign: float = 1.0) -> None:
        idx = np.asarray(idx, int)
        if len(idx) != cone.dim:
            raise ValueError("cone dimension differs from index count")
        self.cones.append(_Cone(idx, cone, float(sign)))

    def add_concave_constraint(self, idx, fn: Oracle) -> None:
        self.constraints.append(_Term(np.asarray(idx, int), fn))

    def add_concave_objective(self, idx, fn: Oracle, weight: float = 1.0) -> None:
        self.objective_terms.append(_Term(np.asarray(idx, int), fn, float(weight)))

    @property
    def lb(self) -> np.ndarray:
        return np.array(self._lb)

    @property
    def ub(self) -> np.ndarray:
        return np.array(self._ub)

    @property
    def c(self) -> np.ndarray:
        return np.array(self._c)

    @property
    def artificial(self) -> np.ndarray:
        return self.art_lo | self.art_hi

    @property
    def art_lo(self) -> np.ndarray:
        return np.array(self._art_lo, dtype=bool)

    @property
    def art_hi(self) -> np.ndarray:
        return np.array(self._art_hi, dtype=bool)

    def bounds(self, box_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        lb, ub = self.lb, self.ub
        lb[self.art_lo] *= box_scale
        ub[self.art_hi] *= box_scale
        return lb, ub

    @property
    def is_linear(self) -> bool:
        return not self.constraints and not self.objective_terms

    def objective_value(self, x: np.ndarray) -> float:
        val = self.const + float(self.c @ x)
        for term in self.objective_terms:
            val += term.weight * term.fn(x[term.idx])[0]
        return val


# standard form --------------------------------------------------------------


@dataclass
class StandardForm:
    """maximize c.z s.t. A_eq z = b_eq, A_ub z <= b_ub, lb <= z <= ub."""

    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    n_orig: int


def _rows_to_csr(rows, ncols):
    data, ri, ci = [], [], []
    for r, (idx, coef, _) in enumerate(rows):
        ri.extend([r] * len(idx))
        ci.extend(idx.tolist())
        data.extend(coef.tolist())
    return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), ncols))


def to_standard_form(prog: ConvexProgram, box_scale: float = 1.0, extra_le=(), n_extra: int = 0,
                     extra_c=None) -> StandardForm:
    """Linear part of ``prog``; cones become x_S = sign * G^T lambda, lambda >= 0.

    ``n_extra`` trailing free columns (epigraph variables) are appended
    after the cone multipliers.
    """
    n = prog.n
    eq_rows = list(prog.eq_rows)
    nlam = sum(len(cn.cone.generators) for cn in prog.cones)
    col = n
    for cn in prog.cones:
        G = cn.cone.generators
        k = len(G)
        for r, i in enumerate(cn.idx):
            idx = np.concatenate([[i], np.arange(col, col + k)])
            coef = np.concatenate([[cn.sign], -G[:, r]])
            eq_rows.append((idx.astype(int), coef, 0.0))
        col += k
    ntot = n + nlam + n_extra
    plb, pub = prog.bounds(box_scale)
    lb = np.concatenate([plb, np.zeros(nlam), np.full(n_extra, -np.inf)])
    ub = np.concatenate([pub, np.full(nlam, np.inf), np.full(n_extra, np.inf)])
    c = np.concatenate([prog.c, np.zeros(nlam + n_extra)])
    if extra_c is not None:
        c[n + nlam:] = extra_c
    le_rows = list(prog.le_rows) + list(extra_le)
    return StandardForm(
        c=c,
        A_eq=_rows_to_csr(eq_rows, ntot),
        b_eq=np.array([r[2] for r in eq_rows]),
        A_ub=_rows_to_csr(le_rows, ntot),
        b_ub=np.array([r[2] for r in le_rows]),
        lb=lb,
        ub=ub,
        n_orig=n,
    )


def _highs(c, A_eq, b_eq, A_ub, b_ub, lb, ub, tol):
    opts = {"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol}
    kw = {}
    if A_eq.shape[0]:
        kw["A_eq"], kw["b_eq"] = A_eq, b_eq
    if A_ub.shape[0]:
        kw["A_ub"], kw["b_ub"] = A_ub, b_ub
    bounds = np.column_stack([np.where(np.isfinite(lb), lb, -np.inf), np.where(np.isfinite(ub), ub, np.inf)])
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b) for a, b in bounds]
    return linprog(c, bounds=bounds, method="highs", options=opts, **kw)


def farkas_certificate(std: StandardForm, tol: float = 1e-9) -> dict | None:
    """Multipliers (mu, nu <= 0) proving the linear system empty.

    For any feasible z, w.z >= mu.b_eq + nu.b_ub with w = A_eq^T mu + A_ub^T nu;
    the certificate is valid when that bound exceeds max over the box of w.z.
    Obtained from the duals of the phase-one problem (minimize total
    constraint violation).
    """
    m_eq, m_ub = std.A_eq.shape[0], std.A_ub.shape[0]
    n = len(std.c)
    A_eq = sp.hstack([std.A_eq, sp.eye(m_eq), -sp.eye(m_eq), sp.csr_matrix((m_eq, m_ub))]).tocsr()
    A_ub = sp.hstack([std.A_ub, sp.csr_matrix((m_ub, 2 * m_eq)), -sp.eye(m_ub)]).tocsr()
    c = np.concatenate([np.zeros(n), np.ones(2 * m_eq + m_ub)])
    lb = np.concatenate([std.lb, np.zeros(2 * m_eq + m_ub)])
    ub = np.concatenate([std.ub, np.full(2 * m_eq + m_ub, np.inf)])
    res = _highs(c, A_eq, std.b_eq, A_ub, std.b_ub, lb, ub, tol)
    if res.status != 0 or res.fun <= tol:
        return None
    mu = res.eqlin.marginals if m_eq else np.zeros(0)
    nu = res.ineqlin.marginals if m_ub else np.zeros(0)
    cert = {"kind": "farkas", "mu": np.asarray(mu), "nu": np.asarray(nu), "phase_one": float(res.fun)}
    cert["margin"] = farkas_margin(std, cert)
    return cert


def farkas_margin(std: StandardForm, cert: dict) -> float:
    """mu.b_eq + nu.b_ub - max_box w.z; positive means the certificate holds."""
    mu, nu = cert["mu"], cert["nu"]
    if np.any(nu > 1e-12):
        return -np.inf
    w = np.zeros(len(std.c))
    if len(mu):
        w += std.A_eq.T @ mu
    if len(nu):
        w += std.A_ub.T @ nu
    w[np.abs(w) < 1e-11] = 0.0
    hi = np.where(w > 0, std.ub, std.lb)
    with np.errstate(invalid="ignore"):
        terms = np.where(w != 0, w * hi, 0.0)
    box_max = float(np.sum(terms))
    return float(mu @ std.b_eq + nu @ std.b_ub) - box_max


def improving_ray(std: StandardForm, tol: float = 1e-9) -> np.ndarray | None:
    """Direction r of the recession cone with c.r > 0, scaled to |r|_inf <= 1."""
    lb = np.where(np.isfinite(std.lb), 0.0, -1.0)
    ub = np.where(np.isfinite(std.ub), 0.0, 1.0)
    res = _highs(-std.c, std.A_eq, np.zeros(std.A_eq.shape[0]), std.A_ub, np.zeros(std.A_ub.shape[0]),
                 lb, ub, tol)
    if res.status != 0 or -res.fun <= tol:
        return None
    return res.x


def _dump(std: StandardForm, path: str, note: str) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(f"# {note}\n")
        fh.write("max " + " ".join(f"{v:+.12g}*z{j}" for j, v in enumerate(std.c) if v) + "\n")
        for name, A, b, op in (("eq", std.A_eq, std.b_eq, "="), ("ub", std.A_ub, std.b_ub, "<=")):
            A = A.tocsr()
            for r in range(A.shape[0]):
                row = A.getrow(r)
                lhs = " ".join(f"{v:+.12g}*z{j}" for j, v in zip(row.indices, row.data))
                fh.write(f"{name}{r}: {lhs} {op} {b[r]:.12g}\n")
        for j, (lo, hi) in enumerate(zip(std.lb, std.ub)):
            fh.write(f"bound z{j}: [{lo:.12g}, {hi:.12g}]\n")


def _solve_std(std: StandardForm, tol: float):
    return _highs(-std.c, std.A_eq, std.b_eq, std.A_ub, std.b_ub, std.lb, std.ub, tol)


def _lp_dual_value(std: StandardForm, res) -> float:
    """Dual objective of the maximization, from HiGHS marginals of the min form."""
    val = 0.0
    if std.A_eq.shape[0]:
        val += res.eqlin.marginals @ std.b_eq
    if std.A_ub.shape[0]:
        val += res.ineqlin.marginals @ std.b_ub
    lo, hi = res.lower.marginals, res.upper.marginals
    val += np.sum(np.where(np.isfinite(std.lb), lo * np.where(np.isfinite(std.lb), std.lb, 0), 0))
    val += np.sum(np.where(np.isfinite(std.ub), hi * np.where(np.isfinite(std.ub), std.ub, 0), 0))
    return -float(val)


def check_point(prog: ConvexProgram, x: np.ndarray, tol: float, box_scale: float = 1.0) -> bool:
    """Independent feasibility check of every constraint of ``prog`` at ``x``."""
    lb, ub = prog.bounds(box_scale)
    scale = max(1.0, float(np.abs(x).max(initial=0.0)))
    t = tol * scale
    if np.any(x < lb - t) or np.any(x > ub + t):
        return False
    for idx, coef, rhs in prog.eq_rows:
        if abs(coef @ x[idx] - rhs) > t:
            return False
    for idx, coef, rhs in prog.le_rows:
        if coef @ x[idx] - rhs > t:
            return False
    for cn in prog.cones:
        if not contains(cn.cone, cn.sign * x[cn.idx], tol=t):
            return False
    for term in prog.constraints:
        if term.fn(x[term.idx])[0] < -t:
            return False
    return True


def solve_lp(prog: ConvexProgram, config: SolverConfig = DEFAULT) -> SolveResult:
    if not prog.is_linear:
        raise ValueError("solve_lp needs a program without nonlinear oracles")
    std = to_standard_form(prog)
    if config.dump_path:
        _dump(std, config.dump_path, "solve_lp")
    res = _solve_std(std, config.lp_feas_tol)
    return _lp_result(prog, std, res, config)


def _lp_result(prog, std, res, config) -> SolveResult:
    if res.status == 0:
        x = res.x[: prog.n]
        value = float(std.c @ res.x) + prog.const
        cert = {
            "kind": "dual",
            "eq": res.eqlin.marginals if std.A_eq.shape[0] else np.zeros(0),
            "ub": res.ineqlin.marginals if std.A_ub.shape[0] else np.zeros(0),
            "dual_value": _lp_dual_value(std, res) + prog.const,
        }
        out = SolveResult(Status.OPTIMAL, x, value, cert, gap=0.0, iterations=1)
        out.verified = check_point(prog, x, 10 * config.lp_feas_tol)
        return out
    if res.status == 2:
        cert = farkas_certificate(std, config.lp_feas_tol)
        return SolveResult(Status.INFEASIBLE, certificate=cert, iterations=1)
    if res.status == 3:
        ray = improving_ray(std, config.lp_feas_tol)
        cert = None if ray is None else {"kind": "ray", "direction": ray[: prog.n]}
        return SolveResult(Status.UNBOUNDED, value=np.inf, certificate=cert, iterations=1)
    raise NumericalFailure(f"LP solver failed: {res.message}")


def _initial_point(prog: ConvexProgram, box_scale: float) -> np.ndarray:
    lb, ub = prog.bounds(box_scale)
    x0 = np.ones(prog.n) if prog.start is None else np.array(prog.start, float)
    return np.clip(x0, lb, ub)


def _cut(term: _Term, x: np.ndarray, col_of_tau: int | None):
    """Tangent cut of h at x: returns an A_ub row (idx, coef, rhs)."""
    z = x[term.idx]
    val, g = term.fn(z)
    g = np.asarray(g, float)
    rhs = float(val - g @ z)
    if col_of_tau is None:
        # f(z0) + g.(z - z0) >= 0  <=>  -g.z <= f(z0) - g.z0
        return (term.idx, -g, rhs)
    return (np.concatenate([term.idx, [col_of_tau]]), np.concatenate([-g, [1.0]]), rhs)


def _kelley(prog: ConvexProgram, config: SolverConfig, box_scale: float, stop=None) -> SolveResult:
    nterm = len(prog.objective_terms)
    base = to_standard_form(prog, box_scale, n_extra=nterm,
                            extra_c=np.array([t.weight for t in prog.objective_terms]))
    ncol = len(base.c)
    tau_cols = list(range(ncol - nterm, ncol))
    cuts: list = []
    x0 = _initial_point(prog, box_scale)
    for k, term in enumerate(prog.objective_terms):
        cuts.append(_cut(term, x0, tau_cols[k]))
    for term in prog.constraints:
        cuts.append(_cut(term, x0, None))

    best_x, best_val = None, -np.inf
    ubs: list[float] = []
    b_ub0 = base.b_ub
    A_ub0 = base.A_ub
    for it in range(1, config.iter_limit + 1):
        if cuts:
            A_cut = _rows_to_csr(cuts, ncol)
            A_ub = sp.vstack([A_ub0, A_cut]).tocsr()
            b_ub = np.concatenate([b_ub0, [c[2] for c in cuts]])
        else:
            A_ub, b_ub = A_ub0, b_ub0
        std = StandardForm(base.c, base.A_eq, base.b_eq, A_ub, b_ub, base.lb, base.ub, prog.n)
        if config.dump_path and it == 1:
            _dump(std, config.dump_path, "cutting-plane relaxation, first iterate")
        res = _solve_std(std, config.lp_feas_tol)
        if res.status == 2:
            cert = farkas_certificate(std, config.lp_feas_tol)
            return SolveResult(Status.INFEASIBLE, certificate=cert, iterations=it, upper_bounds=ubs)
        if res.status == 3:
            ray = improving_ray(std, config.lp_feas_tol)
            cert = None if ray is None else {"kind": "ray", "direction": ray[: prog.n]}
            return SolveResult(Status.UNBOUNDED, value=np.inf, certificate=cert, iterations=it,
                               upper_bounds=ubs)
        if res.status != 0:
            raise NumericalFailure(f"LP relaxation failed: {res.message}")
        z = res.x
        ub_val = float(-res.fun) + prog.const
        # the bound can only drop as cuts are added; guard against solver noise
        ub_val = min(ub_val, ubs[-1]) if ubs else ub_val
        ubs.append(ub_val)
        x = z[: prog.n]
        if stop is not None and stop(x, ub_val):
            return SolveResult(Status.STOPPED, x, ub_val, {"kind": "stopped", "count": len(cuts)},
                               iterations=it, upper_bounds=ubs)

        new_cuts = []
        viol = 0.0
        for term in prog.constraints:
            val = term.fn(x[term.idx])[0]
            if val < 0:
                viol = max(viol, -val)
                new_cuts.append(_cut(term, x, None))
        obj = prog.const + float(prog.c @ x)
        for k, term in enumerate(prog.objective_terms):
            hv = term.fn(x[term.idx])[0]
            obj += term.weight * hv
            if z[tau_cols[k]] > hv + 1e-13 * max(1.0, abs(hv)):
                new_cuts.append(_cut(term, x, tau_cols[k]))
        if viol <= config.feas_tol and obj > best_val:
            best_x, best_val = x.copy(), obj

        gap = ub_val - best_val
        if best_x is not None and gap <= config.gap_tol * max(1.0, abs(best_val)):
            out = SolveResult(Status.OPTIMAL, best_x, best_val, {"kind": "cuts", "count": len(cuts)},
                              gap=max(gap, 0.0), iterations=it, upper_bounds=ubs)
            out.verified = check_point(prog, best_x, 10 * config.feas_tol, box_scale)
            return out
        if not new_cuts:
            # relaxation point is feasible and its cuts are tight: it is optimal
            best_x, best_val = x.copy(), obj
            out = SolveResult(Status.OPTIMAL, best_x, best_val, {"kind": "cuts", "count": len(cuts)},
                              gap=max(ub_val - obj, 0.0), iterations=it, upper_bounds=ubs)
            out.verified = check_point(prog, best_x, 10 * config.feas_tol, box_scale)
            return out
        cuts.extend(new_cuts)
    return SolveResult(Status.ITER_LIMIT, best_x, best_val, None, gap=ubs[-1] - best_val,
                       iterations=config.iter_limit, upper_bounds=ubs)


def _touches_artificial(prog: ConvexProgram, x: np.ndarray, box_scale: float) -> bool:
    if not prog.artificial.any():
        return False
    lb, ub = prog.bounds(box_scale)
    near = lambda a, b: np.abs(a - b) <= 1e-6 * np.maximum(1.0, np.abs(b))
    hit = (prog.art_hi & near(x, ub)) | (prog.art_lo & near(x, lb))
    return bool(hit.any())


def maximize_concave(prog: ConvexProgram, config: SolverConfig = DEFAULT, stop=None) -> SolveResult:
    """Cutting-plane maximization with an artificial-box unboundedness test.

    ``stop(x, upper_bound)`` is called on every relaxation point; returning
    True ends the run with status Stopped (for callers that only need a
    decision, not the optimum).

    When the optimum sits on an artificial bound, the box is enlarged
    tenfold (up to ``config.box_expansions`` times).  If the value keeps
    growing without its increments shrinking, the program is reported
    Unbounded; otherwise the last value is returned.
    """
    if prog.is_linear and not prog.artificial.any():
        return solve_lp(prog, config)
    scale = 1.0
    res = _kelley(prog, config, scale, stop)
    if not res.ok or not _touches_artificial(prog, res.x, scale):
        return res
    values = [res.value]
    for _ in range(config.box_expansions):
        scale *= 10.0
        nxt = _kelley(prog, config, scale, stop)
        if not nxt.ok:
            return nxt
        values.append(nxt.value)
        res = nxt
        if not _touches_artificial(prog, res.x, scale):
            return res
    inc = np.diff(values)
    grow_tol = 10 * config.gap_tol * max(1.0, abs(values[-1]))
    if inc[-1] > grow_tol and (len(inc) < 2 or inc[-1] >= 0.9 * inc[-2]):
        log.debug("value grows with the box: %s", values)
        return SolveResult(Status.UNBOUNDED, res.x, np.inf, {"kind": "box_growth", "values": values},
                           iterations=res.iterations, upper_bounds=res.upper_bounds)
    return res
