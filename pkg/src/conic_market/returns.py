"""Industrial return maps R_t : R_+^N -> R^{d+N}.

Every node's map is stored as a linear part plus concave scalar terms
along fixed directions of the financial cone:

    R(alpha) = L @ alpha + sum_k v_k * f_k(alpha)

which is exactly what the hypograph encoding of attainability needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from .errors import DimensionMismatch, InstanceError

SLOPE_CAP = 1e8

ScalarOracle = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class ConcaveTerm:
    direction: np.ndarray
    fn: ScalarOracle


@dataclass(frozen=True)
class NodeReturn:
    linear: np.ndarray  # (d+N, N)
    terms: tuple[ConcaveTerm, ...] = ()

    def __call__(self, alpha) -> np.ndarray:
        alpha = np.asarray(alpha, float)
        out = self.linear @ alpha
        for t in self.terms:
            out = out + t.direction * t.fn(alpha)[0]
        return out

    def with_term(self, term: ConcaveTerm) -> "NodeReturn":
        return NodeReturn(self.linear, self.terms + (term,))


def cobb_douglas_oracle(p: float, gamma: np.ndarray, slope_cap: float = SLOPE_CAP) -> ScalarOracle:
    """Value and supergradient of alpha -> p * prod alpha_i^gamma_i.

    At the boundary the gradient is infinite; slopes are capped at
    ``slope_cap``.  Such a cut is only wrong for inputs below roughly
    slope_cap**(-1/(1-gamma)), which the cutting plane then leaves anyway.
    """
    gamma = np.asarray(gamma, float)

    def fn(alpha):
        a = np.maximum(np.asarray(alpha, float), 0.0)
        if p == 0.0:
            return 0.0, np.zeros_like(a)
        val = p * float(np.prod(a ** gamma))
        pos = a > 0
        grad = np.full_like(a, slope_cap)
        grad[pos] = gamma[pos] * val / a[pos]
        return val, np.minimum(grad, slope_cap)

    return fn


def capped_mass(alpha):
    """alpha -> min(1, sum alpha), concave on the orthant."""
    a = np.asarray(alpha, float)
    s = float(a.sum())
    if s < 1.0:
        return s, np.ones_like(a)
    return 1.0, np.zeros_like(a)


class ReturnSpec:
    """Per-node return maps; node indices refer to the market's tree."""

    kind = "abstract"

    def __init__(self, d: int, N: int):
        self.d, self.N = d, N

    def at(self, node: int) -> NodeReturn:
        raise NotImplementedError

    def evaluate(self, node: int, alpha) -> np.ndarray:
        return self.at(node)(alpha)

    def affine_minorant(self, node: int) -> tuple[np.ndarray, np.ndarray] | None:
        """(a, L) with R(alpha) - a - L alpha in the financial cone, if known analytically."""
        return None

    @property
    def identically_zero(self) -> bool:
        return False

    @property
    def serializable(self) -> bool:
        return True


class ZeroReturn(ReturnSpec):
    kind = "zero"

    def at(self, node):
        return NodeReturn(np.zeros((self.d + self.N, self.N)))

    def affine_minorant(self, node):
        return np.zeros(self.d + self.N), np.zeros((self.d + self.N, self.N))

    @property
    def identically_zero(self):
        return True

    def to_dict(self, tree):
        return {"kind": "zero"}


def _per_node(value, tree, default=None, shape=None):
    """Expand a scalar/array or an {id: value} mapping to per-node arrays."""
    out = []
    for nid in tree.ids:
        if isinstance(value, Mapping):
            key = str(nid)
            v = value.get(key, value.get(nid, default))
            if v is None:
                v = default
        else:
            v = value
        arr = None if v is None else np.asarray(v, float)
        if arr is not None and shape is not None and arr.shape != shape:
            raise DimensionMismatch(f"expected shape {shape}, got {arr.shape}")
        out.append(arr)
    return out


class LinearReturn(ReturnSpec):
    kind = "linear"

    def __init__(self, tree, matrix):
        super().__init__(tree.d, tree.N)
        m = tree.d + tree.N
        self._raw = matrix
        self.mats = _per_node(matrix, tree, default=np.zeros((m, tree.N)), shape=(m, tree.N))

    def at(self, node):
        return NodeReturn(self.mats[node])

    def affine_minorant(self, node):
        return np.zeros(self.d + self.N), self.mats[node]

    @property
    def identically_zero(self):
        return all(not np.any(M) for M in self.mats)

    def to_dict(self, tree):
        raw = self._raw
        if isinstance(raw, Mapping):
            raw = {str(k): np.asarray(v, float).tolist() for k, v in raw.items()}
        else:
            raw = np.asarray(raw, float).tolist()
        return {"kind": "linear", "matrix": raw}


class CobbDouglasReturn(ReturnSpec):
    """Payout p * prod alpha^gamma - eta . alpha in one financial coordinate."""

    kind = "cobb_douglas"

    def __init__(self, tree, gamma, p, eta, payout_coord: int = 0, slope_cap: float = SLOPE_CAP):
        super().__init__(tree.d, tree.N)
        self.gamma = np.asarray(gamma, float)
        if self.gamma.shape != (tree.N,):
            raise DimensionMismatch("need one exponent per industrial asset")
        if np.any(self.gamma <= 0) or self.gamma.sum() >= 1:
            raise InstanceError("exponents must be positive with sum below 1")
        if not (0 <= payout_coord < tree.d):
            raise InstanceError("payout coordinate must be a financial asset")
        self.payout = int(payout_coord)
        self._raw = (p, eta)
        self.p = [float(v) for v in _per_node(p, tree, default=0.0, shape=())]
        self.eta = _per_node(eta, tree, default=np.zeros(tree.N), shape=(tree.N,))
        if any(v < 0 for v in self.p) or any(np.any(e < 0) for e in self.eta):
            raise InstanceError("Cobb-Douglas prices and costs must be nonnegative")
        self.slope_cap = slope_cap
        m = tree.d + tree.N
        self._nodes = []
        for i in range(tree.n_nodes):
            L = np.zeros((m, tree.N))
            L[self.payout] = -self.eta[i]
            v = np.zeros(m)
            v[self.payout] = 1.0
            terms = (ConcaveTerm(v, cobb_douglas_oracle(self.p[i], self.gamma, slope_cap)),) if self.p[i] > 0 else ()
            self._nodes.append(NodeReturn(L, terms))

    def at(self, node):
        return self._nodes[node]

    def affine_minorant(self, node):
        # the production term is nonnegative, so -eta.alpha bounds from below
        return np.zeros(self.d + self.N), self._nodes[node].linear

    def to_dict(self, tree):
        p, eta = self._raw

        def clean(v):
            if isinstance(v, Mapping):
                return {str(k): np.asarray(x, float).tolist() for k, x in v.items()}
            return np.asarray(v, float).tolist()

        return {"kind": "cobb_douglas", "gamma": self.gamma.tolist(), "p": clean(p), "eta": clean(eta),
                "payout_coord": self.payout + 1}


class OracleReturn(ReturnSpec):
    """User callbacks: ``value(node, alpha)`` and ``supergradient(node, alpha)`` (a (d+N, N) array).

    For the convex encodings each financial coordinate must be concave on
    its own, and the industrial coordinates of the return must vanish.
    """

    kind = "oracle"

    def __init__(self, tree, value, supergradient, declared_concave: bool = True):
        super().__init__(tree.d, tree.N)
        self.value, self.supergradient = value, supergradient
        self.declared_concave = declared_concave
        m = tree.d + tree.N
        self._nodes = []
        for i in range(tree.n_nodes):
            terms = []
            for j in range(tree.d):
                v = np.zeros(m)
                v[j] = 1.0
                terms.append(ConcaveTerm(v, self._coord(i, j)))
            self._nodes.append(NodeReturn(np.zeros((m, tree.N)), tuple(terms)))

    def _coord(self, node, j):
        def fn(alpha):
            return float(self.value(node, alpha)[j]), np.asarray(self.supergradient(node, alpha), float)[j]
        return fn

    def at(self, node):
        return self._nodes[node]

    def evaluate(self, node, alpha):
        return np.asarray(self.value(node, alpha), float)

    @property
    def serializable(self):
        return False


class DominatedReturn(ReturnSpec):
    """base + epsilon * min(1, |alpha|_1) * w_node."""

    kind = "dominated"

    def __init__(self, base: ReturnSpec, epsilon: float, directions):
        super().__init__(base.d, base.N)
        self.base, self.epsilon = base, float(epsilon)
        self.directions = [None if w is None else np.asarray(w, float) for w in directions]

    def at(self, node):
        nr = self.base.at(node)
        w = self.directions[node]
        if w is None:
            return nr
        return nr.with_term(ConcaveTerm(self.epsilon * w, capped_mass))

    def evaluate(self, node, alpha):
        out = self.base.evaluate(node, alpha)
        w = self.directions[node]
        if w is not None:
            out = out + self.epsilon * w * capped_mass(alpha)[0]
        return out

    def affine_minorant(self, node):
        return self.base.affine_minorant(node)

    @property
    def serializable(self):
        return False


def return_from_dict(spec: Mapping[str, Any], tree) -> ReturnSpec:
    kind = spec.get("kind")
    allowed = {
        "zero": {"kind"},
        "linear": {"kind", "matrix"},
        "cobb_douglas": {"kind", "gamma", "p", "eta", "payout_coord"},
    }
    if kind not in allowed:
        raise InstanceError(f"unknown return kind {kind!r}")
    extra = set(spec) - allowed[kind]
    if extra:
        raise InstanceError(f"unknown return fields: {sorted(extra)}")
    if kind == "zero":
        return ZeroReturn(tree.d, tree.N)
    if kind == "linear":
        return LinearReturn(tree, spec["matrix"])
    try:
        return CobbDouglasReturn(tree, spec["gamma"], spec["p"], spec.get("eta", [0.0] * tree.N),
                                 int(spec.get("payout_coord", 1)) - 1)
    except KeyError as exc:
        raise InstanceError(f"cobb_douglas return missing field {exc}") from None
