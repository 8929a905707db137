"""Finite scenario trees and adapted processes.

A tree stands for a filtered probability space with trivial initial
sigma-field: each node is an atom of F_t, and a measure is a vector of
strictly positive leaf weights summing to one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DanglingParent,
    DimensionMismatch,
    DuplicateId,
    InstanceError,
    LeafAtWrongTime,
    NodeIsLeaf,
    ProbabilityNotStochastic,
)

PROB_TOL = 1e-12


@dataclass(frozen=True)
class Node:
    id: Any
    t: int
    parent: Any
    q: float


def _id_key(node_id):
    return (type(node_id).__name__, node_id)


class EventTree:
    """Validated scenario tree.

    Nodes are stored breadth-first, ordered by ``(t, id)``.  All per-node
    arrays are indexed by that position; ``index[id]`` maps ids back.
    """

    def __init__(self, T: int, d: int, N: int, nodes: Iterable[Node]):
        nodes = list(nodes)
        if int(T) != T or T < 1:
            raise InstanceError(f"horizon T must be an integer >= 1, got {T!r}")
        if d < 1 or N < 1:
            raise InstanceError(f"need d >= 1 and N >= 1, got d={d}, N={N}")
        self.T = int(T)
        self.d = int(d)
        self.N = int(N)

        seen = set()
        for nd in nodes:
            if nd.id in seen:
                raise DuplicateId(f"duplicate node id {nd.id!r}")
            seen.add(nd.id)
        by_id = {nd.id: nd for nd in nodes}

        roots = [nd for nd in nodes if nd.parent is None]
        if len(roots) != 1:
            raise InstanceError(f"expected exactly one root, found {len(roots)}")
        if roots[0].t != 0:
            raise InstanceError("root must sit at t = 0")
        for nd in nodes:
            if nd.parent is None:
                continue
            if nd.parent not in by_id:
                raise DanglingParent(f"node {nd.id!r} has unknown parent {nd.parent!r}")
            if by_id[nd.parent].t != nd.t - 1:
                raise InstanceError(f"node {nd.id!r}: parent time must be t - 1")
            if not (0.0 < nd.q <= 1.0):
                raise ProbabilityNotStochastic(
                    f"node {nd.id!r}: conditional probability {nd.q} not in (0, 1]"
                )

        ordered = sorted(nodes, key=lambda nd: (nd.t, _id_key(nd.id)))
        self.ids = tuple(nd.id for nd in ordered)
        self.index = {nid: i for i, nid in enumerate(self.ids)}
        n = len(ordered)
        self.time = np.array([nd.t for nd in ordered], dtype=int)
        self.parent = np.array(
            [-1 if nd.parent is None else self.index[nd.parent] for nd in ordered], dtype=int
        )
        self.q = np.array([1.0 if nd.parent is None else float(nd.q) for nd in ordered])
        children: list[list[int]] = [[] for _ in range(n)]
        for i in range(n):
            if self.parent[i] >= 0:
                children[self.parent[i]].append(i)
        self.children = tuple(tuple(c) for c in children)

        for i in range(n):
            if self.children[i]:
                total = sum(self.q[c] for c in self.children[i])
                if abs(total - 1.0) > PROB_TOL:
                    raise ProbabilityNotStochastic(
                        f"children of node {self.ids[i]!r} have probabilities summing to {total}"
                    )
            elif self.time[i] != self.T:
                raise LeafAtWrongTime(
                    f"leaf {self.ids[i]!r} sits at t={self.time[i]}, expected T={self.T}"
                )
        if self.time.max() > self.T:
            raise LeafAtWrongTime("node beyond the horizon")

        prob = np.empty(n)
        for i in range(n):
            prob[i] = self.q[i] if self.parent[i] < 0 else prob[self.parent[i]] * self.q[i]
        self.prob = prob
        self.leaves = tuple(i for i in range(n) if not self.children[i])
        self.root = 0

        # ancestors[i, j] = 1 iff j is on the root path of i (inclusive)
        anc = np.zeros((n, n))
        for i in range(n):
            j = i
            while j >= 0:
                anc[i, j] = 1.0
                j = self.parent[j]
        self.ancestors = anc
        for arr in (self.time, self.parent, self.q, self.prob, self.ancestors):
            arr.setflags(write=False)
        self._nodes = tuple(ordered)

    @property
    def n_nodes(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.d + self.N

    def nodes(self) -> tuple[Node, ...]:
        return self._nodes

    def is_leaf(self, i: int) -> bool:
        return not self.children[i]

    def path(self, i: int) -> list[int]:
        """Node indices from the root down to ``i``."""
        out = []
        while i >= 0:
            out.append(i)
            i = self.parent[i]
        return out[::-1]

    def nodes_at(self, t: int) -> list[int]:
        return [i for i in range(self.n_nodes) if self.time[i] == t]

    def leaf_probs(self) -> np.ndarray:
        return self.prob[list(self.leaves)]

    def node_weights(self, leaf_weights: np.ndarray | None = None) -> np.ndarray:
        """Unconditional node weights induced by a measure given on leaves."""
        if leaf_weights is None:
            return np.array(self.prob)
        lw = np.asarray(leaf_weights, dtype=float)
        if lw.shape != (len(self.leaves),):
            raise DimensionMismatch("leaf weight vector has wrong length")
        if np.any(lw <= 0) or abs(lw.sum() - 1.0) > 1e-10:
            raise ProbabilityNotStochastic("measure must be strictly positive and sum to 1")
        w = np.zeros(self.n_nodes)
        w[list(self.leaves)] = lw
        for i in range(self.n_nodes - 1, 0, -1):
            w[self.parent[i]] += w[i]
        return w

    def relabel(self, mapping: Mapping[Any, Any]) -> "EventTree":
        nodes = [
            Node(mapping[nd.id], nd.t, None if nd.parent is None else mapping[nd.parent], nd.q)
            for nd in self._nodes
        ]
        return EventTree(self.T, self.d, self.N, nodes)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "d": self.d,
            "N": self.N,
            "nodes": [
                {"id": nd.id, "t": nd.t, "parent": nd.parent, "q": float(self.q[i])}
                for i, nd in enumerate(self._nodes)
            ],
        }


_TREE_FIELDS = {"T", "d", "N", "nodes"}
_NODE_FIELDS = {"id", "t", "parent", "q"}


def build_tree(description: Mapping[str, Any]) -> EventTree:
    """Validate a node-list description (the JSON tree schema) into a tree."""
    unknown = set(description) - _TREE_FIELDS
    if unknown:
        raise InstanceError(f"unknown tree fields: {sorted(unknown)}")
    missing = _TREE_FIELDS - set(description)
    if missing:
        raise InstanceError(f"missing tree fields: {sorted(missing)}")
    nodes = []
    for raw in description["nodes"]:
        if isinstance(raw, Mapping):
            extra = set(raw) - _NODE_FIELDS
            if extra:
                raise InstanceError(f"unknown node fields: {sorted(extra)}")
            try:
                nodes.append(Node(raw["id"], int(raw["t"]), raw.get("parent"), float(raw.get("q", 1.0))))
            except KeyError as exc:
                raise InstanceError(f"node missing field {exc}") from None
        else:
            nid, t, parent, q = raw
            nodes.append(Node(nid, int(t), parent, float(q)))
    return EventTree(description["T"], description["d"], description["N"], nodes)


class AdaptedProcess:
    """One vector of fixed dimension per node of a tree."""

    def __init__(self, tree: EventTree, values):
        vals = np.array(values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != tree.n_nodes:
            raise DimensionMismatch(
                f"process has {vals.shape[0]} node values, tree has {tree.n_nodes} nodes"
            )
        vals.setflags(write=False)
        self.tree = tree
        self.values = vals

    @classmethod
    def zeros(cls, tree: EventTree, dim: int) -> "AdaptedProcess":
        return cls(tree, np.zeros((tree.n_nodes, dim)))

    @classmethod
    def from_mapping(cls, tree: EventTree, by_id: Mapping[Any, Sequence[float]]) -> "AdaptedProcess":
        return cls(tree, [by_id[nid] for nid in tree.ids])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, node_id):
        return self.values[self.tree.index[node_id]]

    def at(self, i: int) -> np.ndarray:
        return self.values[i]

    def leaf_values(self) -> np.ndarray:
        return self.values[list(self.tree.leaves)]

    def __add__(self, other: "AdaptedProcess") -> "AdaptedProcess":
        return AdaptedProcess(self.tree, self.values + other.values)

    def __sub__(self, other: "AdaptedProcess") -> "AdaptedProcess":
        return AdaptedProcess(self.tree, self.values - other.values)

    def __mul__(self, a: float) -> "AdaptedProcess":
        return AdaptedProcess(self.tree, a * self.values)

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        return {str(nid): [float(v) for v in self.values[i]] for i, nid in enumerate(self.tree.ids)}


def _conditional_probs(tree: EventTree, i: int, node_weights: np.ndarray | None) -> np.ndarray:
    kids = tree.children[i]
    if node_weights is None:
        return tree.q[list(kids)]
    return node_weights[list(kids)] / node_weights[i]


def conditional_expectation(process: AdaptedProcess, node: int, node_weights=None) -> np.ndarray:
    """Expectation of the children's values given the atom ``node`` (an index)."""
    tree = process.tree
    if tree.is_leaf(node):
        raise NodeIsLeaf(f"node {tree.ids[node]!r} has no children")
    kids = list(tree.children[node])
    q = _conditional_probs(tree, node, node_weights)
    return q @ process.values[kids]


def is_martingale(process: AdaptedProcess, tol: float = 1e-9, node_weights=None) -> bool:
    tree = process.tree
    for i in range(tree.n_nodes):
        if tree.is_leaf(i):
            continue
        ce = conditional_expectation(process, i, node_weights)
        if np.any(np.abs(process.values[i] - ce) > tol):
            return False
    return True


def martingale_from_leaves(tree: EventTree, leaf_values, node_weights=None) -> AdaptedProcess:
    """The martingale closed by ``leaf_values`` (rows ordered like ``tree.leaves``)."""
    lv = np.asarray(leaf_values, dtype=float)
    vals = np.zeros((tree.n_nodes, lv.shape[1]))
    vals[list(tree.leaves)] = lv
    for i in range(tree.n_nodes - 1, -1, -1):
        if not tree.is_leaf(i):
            q = _conditional_probs(tree, i, node_weights)
            vals[i] = q @ vals[list(tree.children[i])]
    return AdaptedProcess(tree, vals)


def leaf_expectation(tree: EventTree, leaf_values, leaf_weights=None) -> np.ndarray:
    w = tree.leaf_probs() if leaf_weights is None else np.asarray(leaf_weights, dtype=float)
    return w @ np.asarray(leaf_values, dtype=float)
