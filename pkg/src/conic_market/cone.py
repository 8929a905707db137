"""Polyhedral cones given by generators.

Every query reduces to a small LP (or a nonnegative least-squares fast
path), so no facet description is ever needed.
"""

from __future__ import annotations

from functools import cached_property
from itertools import combinations

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog, nnls

from .errors import (
    BadDiagonal,
    DimensionMismatch,
    EpsilonOutOfRange,
    InstanceError,
    NonPositiveEntry,
    NumericalFailure,
)

MEMBER_TOL = 1e-9
INTERIOR_TOL = 1e-7
RANK_TOL = 1e-10

_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


class PolyCone:
    """Conic hull of finitely many generators in R^m.

    Zero generators are dropped.  A cone with no generators left is only
    accepted with ``allow_zero=True``; it is the trivial cone {0}.
    """

    def __init__(self, generators, dim: int | None = None, allow_zero: bool = False, bidask=None):
        G = np.array(generators, dtype=float)
        if G.size == 0:
            if dim is None:
                raise InstanceError("dimension needed for an empty generator list")
            G = np.zeros((0, dim))
        if G.ndim != 2:
            raise DimensionMismatch("generators must form a 2-d array")
        if dim is not None and G.shape[1] != dim:
            raise DimensionMismatch(f"generators have dimension {G.shape[1]}, expected {dim}")
        G = G[np.abs(G).max(axis=1) > 0] if len(G) else G
        if len(G) == 0 and not allow_zero:
            raise InstanceError("a cone needs at least one nonzero generator")
        G.setflags(write=False)
        self.generators = G
        self.dim = G.shape[1]
        self.bidask = None if bidask is None else np.array(bidask, dtype=float)

    def __repr__(self):
        return f"PolyCone(dim={self.dim}, n_generators={len(self.generators)})"

    @classmethod
    def orthant(cls, m: int) -> "PolyCone":
        return cls(np.eye(m))

    @classmethod
    def zero(cls, m: int) -> "PolyCone":
        return cls(np.zeros((0, m)), dim=m, allow_zero=True)

    @property
    def is_zero(self) -> bool:
        return len(self.generators) == 0

    @cached_property
    def reversible(self) -> np.ndarray:
        """Mask of generators g with -g also in the cone."""
        return np.array([contains(self, -g) for g in self.generators], dtype=bool)

    @cached_property
    def lineality_basis(self) -> np.ndarray:
        rev = self.generators[self.reversible]
        return _orthonormal_rows(rev, self.dim)

    @cached_property
    def span_basis(self) -> np.ndarray:
        return _orthonormal_rows(self.generators, self.dim)


def _orthonormal_rows(vectors: np.ndarray, m: int) -> np.ndarray:
    if len(vectors) == 0:
        return np.zeros((0, m))
    _, s, vt = np.linalg.svd(np.asarray(vectors, dtype=float), full_matrices=False)
    rank = int(np.sum(s > RANK_TOL * max(1.0, s[0])))
    return vt[:rank]


def _check_dim(cone: PolyCone, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != cone.dim:
        raise DimensionMismatch(f"vector of length {x.shape[0]} for a cone in R^{cone.dim}")
    return x


def membership_residual(cone: PolyCone, x) -> float:
    """min over lambda >= 0 of ||G^T lambda - x||_inf."""
    x = _check_dim(cone, x)
    if cone.is_zero:
        return float(np.abs(x).max(initial=0.0))
    G = cone.generators
    k, m = G.shape
    # variables (lambda, t): minimize t with |G^T lambda - x| <= t
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A = np.vstack([np.hstack([G.T, -np.ones((m, 1))]), np.hstack([-G.T, -np.ones((m, 1))])])
    b = np.concatenate([x, -x])
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(0, None)] * (k + 1), method="highs", options=_HIGHS)
    if res.status != 0:
        raise NumericalFailure(f"membership LP failed: {res.message}")
    return float(res.fun)


def contains(cone: PolyCone, x, tol: float = MEMBER_TOL) -> bool:
    x = _check_dim(cone, x)
    if not np.any(x):
        return True
    if cone.is_zero:
        return bool(np.abs(x).max() <= tol)
    # nnls can misreport its residual on wide systems, so recheck it
    lam, _ = nnls(cone.generators.T, x)
    if np.all(lam >= 0) and np.abs(cone.generators.T @ lam - x).max() <= tol:
        return True
    return membership_residual(cone, x) <= tol


def dual_contains(cone: PolyCone, y, tol: float = MEMBER_TOL) -> bool:
    y = _check_dim(cone, y)
    if cone.is_zero:
        return True
    return bool(np.all(cone.generators @ y >= -tol))


def _margin_lp(cone: PolyCone, x: np.ndarray, directions: np.ndarray) -> float:
    """max delta in [0, 1] with x +/- delta*b in the cone for every row b."""
    G = cone.generators
    k, m = G.shape
    nd = len(directions)
    if nd == 0:
        return 1.0 if contains(cone, x) else 0.0
    nvar = 2 * nd * k + 1
    rows, rhs = [], []
    for j, b in enumerate(directions):
        for s, sign in enumerate((1.0, -1.0)):
            block = 2 * j + s
            A = np.zeros((m, nvar))
            A[:, block * k:(block + 1) * k] = G.T
            A[:, -1] = -sign * b
            rows.append(A)
            rhs.append(x)
    c = np.zeros(nvar)
    c[-1] = -1.0
    bounds = [(0, None)] * (nvar - 1) + [(0, 1.0)]
    res = linprog(c, A_eq=np.vstack(rows), b_eq=np.concatenate(rhs), bounds=bounds,
                  method="highs", options=_HIGHS)
    if res.status == 2:
        return 0.0
    if res.status != 0:
        raise NumericalFailure(f"margin LP failed: {res.message}")
    return float(-res.fun)


def interior_margin(cone: PolyCone, x) -> float:
    x = _check_dim(cone, x)
    if cone.is_zero:
        return 0.0
    return _margin_lp(cone, x, np.eye(cone.dim))


def in_interior(cone: PolyCone, x, tol: float = INTERIOR_TOL) -> bool:
    return interior_margin(cone, x) > tol


def in_relative_interior(cone: PolyCone, x, tol: float = INTERIOR_TOL) -> bool:
    x = _check_dim(cone, x)
    if cone.is_zero:
        return bool(np.abs(x).max(initial=0.0) <= tol)
    basis = cone.span_basis
    # x must lie in the span; the margin LP only moves within it
    if np.abs(x - basis.T @ (basis @ x)).max() > tol:
        return False
    return _margin_lp(cone, x, basis) > tol


def lineality(cone: PolyCone) -> np.ndarray:
    """Orthonormal basis (rows) of the largest subspace inside the cone."""
    return cone.lineality_basis


def relative_interior_point(cone: PolyCone) -> np.ndarray:
    """A point of ri(cone) with unit 1-norm.

    Any strictly positive combination of all generators is relatively
    interior; unit-normalized generators keep scales comparable.
    """
    G = cone.generators
    if len(G) == 0:
        raise InstanceError("the trivial cone has no nonzero relative-interior point")
    w = (G / np.abs(G).sum(axis=1, keepdims=True)).sum(axis=0)
    if np.abs(w).sum() < 1e-12:
        # the cone is a subspace, every nonzero element is relatively interior
        w = G[0]
    return w / np.abs(w).sum()


def project_financial(cone: PolyCone, d: int, N: int) -> PolyCone:
    """Image of the cone under (x^F, x^I) -> (x^F, 0_N)."""
    if cone.dim != d + N:
        raise DimensionMismatch("cone dimension differs from d + N")
    G = np.array(cone.generators)
    G[:, d:] = 0.0
    return PolyCone(G, dim=d + N, allow_zero=True)


def financial_part(cone: PolyCone, d: int, N: int) -> PolyCone:
    """The section K cap (R^d x {0_N}): exchanges that end with no industrial change.

    Generators are the images of the extreme rays of
    {lambda >= 0 : G^I lambda = 0}, found as minimal supports.
    """
    if cone.dim != d + N:
        raise DimensionMismatch("cone dimension differs from d + N")
    G = cone.generators
    GI = G[:, d:]
    k = len(G)
    rays = []
    zero_ind = np.abs(GI).max(axis=1) <= 1e-14 if k else np.zeros(0, bool)
    rays.extend(G[zero_ind])
    cand = [i for i in range(k) if not zero_ind[i]]
    rank = np.linalg.matrix_rank(GI[cand]) if cand else 0
    for size in range(2, rank + 2):
        for S in combinations(cand, size):
            ns = null_space(GI[list(S)].T)
            if ns.shape[1] != 1:
                continue
            v = ns[:, 0]
            if np.all(v > 1e-12) or np.all(v < -1e-12):
                lam = np.abs(v)
                rays.append(lam @ G[list(S)])
    out = np.array(rays).reshape(-1, d + N)
    out[:, d:] = 0.0
    if len(out):
        out = out / np.abs(out).max(axis=1, keepdims=True)
        out = _dedupe(out)
    return PolyCone(out, dim=d + N, allow_zero=True)


def _dedupe(rows: np.ndarray) -> np.ndarray:
    keep = []
    for r in rows:
        if not any(np.allclose(r, q, atol=1e-12) for q in keep):
            keep.append(r)
    return np.array(keep)


def _validate_bidask(pi) -> np.ndarray:
    pi = np.array(pi, dtype=float)
    if pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
        raise DimensionMismatch("bid-ask matrix must be square")
    if not np.all(np.isfinite(pi)) or np.any(pi <= 0):
        raise NonPositiveEntry("bid-ask entries must be positive and finite")
    if not np.allclose(np.diag(pi), 1.0, rtol=0, atol=1e-14):
        raise BadDiagonal("bid-ask diagonal must be 1")
    return pi


def from_bid_ask(pi) -> PolyCone:
    """Cone of {e_i} and {pi[i][j] e_i - e_j : i != j}."""
    pi = _validate_bidask(pi)
    m = len(pi)
    gens = [np.eye(m)[i] for i in range(m)]
    for i in range(m):
        for j in range(m):
            if i != j:
                g = np.zeros(m)
                g[i] = pi[i, j]
                g[j] = -1.0
                gens.append(g)
    return PolyCone(np.array(gens), bidask=pi)


def shrink_costs(pi, epsilon: float) -> np.ndarray:
    """Reduce every strictly frictional pair's spread by a fraction epsilon.

    Each pair is written as pi_ij = f * r_ij with mid rate r_ij = sqrt(pi_ij / pi_ji)
    and friction factor f = sqrt(pi_ij * pi_ji) >= 1; f becomes
    1 + (1 - epsilon) * (f - 1).  Frictionless pairs are unchanged, entries
    only decrease (so the cone grows), and pi_ij * pi_ji stays >= 1.
    """
    if not (0.0 < epsilon < 1.0):
        raise EpsilonOutOfRange(f"epsilon must lie in (0, 1), got {epsilon}")
    pi = _validate_bidask(pi)
    out = pi.copy()
    m = len(pi)
    for i in range(m):
        for j in range(m):
            if i != j and pi[i, j] * pi[j, i] > 1.0 + 1e-15:
                f = np.sqrt(pi[i, j] * pi[j, i])
                out[i, j] = (1.0 + (1.0 - epsilon) * (f - 1.0)) * np.sqrt(pi[i, j] / pi[j, i])
    return out
