"""Deterministic instance generators (JSON-ready dicts).

Asset values are quoted in cash; a bid-ask entry pi[i][j] (units of i paid
for one unit of j) is ``cost * v_j / v_i``.  The industrial asset is worth
one unit of cash and trades at a fixed conversion factor ``kappa``.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import BadParams

SCHEMA = 1


def _pi(values, cost, kappa: float | None = None, d: int | None = None) -> list:
    """Bid-ask matrix from cash values; industrial legs (index >= d) use kappa."""
    v = np.asarray(values, float)
    m = len(v)
    d = m if d is None else d
    cost = np.broadcast_to(np.asarray(cost, float), (m, m))
    pi = np.ones((m, m))
    for i, j in itertools.product(range(m), range(m)):
        if i == j:
            continue
        c = kappa if kappa is not None and (i >= d or j >= d) else cost[i, j]
        pi[i, j] = c * v[j] / v[i]
    return pi.tolist()


def binomial_nodes(T: int, p_up: float = 0.5) -> list[dict]:
    nodes = [{"id": "0", "t": 0, "parent": None, "q": 1.0}]
    level = ["0"]
    for t in range(1, T + 1):
        nxt = []
        for par in level:
            base = "" if par == "0" else par
            for step, q in (("u", p_up), ("d", 1.0 - p_up)):
                nid = base + step
                nodes.append({"id": nid, "t": t, "parent": par, "q": q})
                nxt.append(nid)
        level = nxt
    return nodes


def binomial(T: int = 1, cost: float = 1.0, up: float = 2.0, down: float = 0.5, p_up: float = 0.5,
             s0: float = 1.0, kappa: float = 2.0) -> dict:
    """Cash and one stock (d = 2) plus one industrial asset; recombining stock prices."""
    if T < 1:
        raise BadParams("T must be >= 1")
    if not (0 < down < 1 < up):
        raise BadParams("need 0 < down < 1 < up")
    if cost < 1:
        raise BadParams("cost factor must be >= 1")
    nodes = binomial_nodes(T, p_up)
    by_node = {}
    for nd in nodes:
        nid = nd["id"]
        ups = nid.count("u")
        downs = nid.count("d")
        s = s0 * up ** ups * down ** downs
        by_node[nid] = {"bidask": _pi([1.0, s, 1.0], cost, kappa, d=2)}
    return {"schema": SCHEMA, "T": T, "d": 2, "N": 1, "nodes": nodes,
            "cones": {"by_node": by_node}, "return": {"kind": "zero"},
            "name": f"binomial_T{T}_cost{cost:g}"}


def chain(T: int = 1, d: int = 1, N: int = 1, cost: float = 1.0, kappa: float | None = None) -> dict:
    """Deterministic tree 0 -> 1 -> ... -> T with constant unit values."""
    if T < 1:
        raise BadParams("T must be >= 1")
    nodes = [{"id": str(t), "t": t, "parent": None if t == 0 else str(t - 1), "q": 1.0} for t in range(T + 1)]
    pi = _pi(np.ones(d + N), cost, kappa, d=d)
    return {"schema": SCHEMA, "T": T, "d": d, "N": N, "nodes": nodes,
            "cones": {"default": {"bidask": pi}}, "return": {"kind": "zero"},
            "name": f"chain_T{T}_cost{cost:g}"}


def random_tree(T: int = 2, branching: int = 2, d: int = 2, N: int = 1, seed: int = 0,
                cost_range=(1.01, 1.1), kappa: float = 2.0, vol: float = 0.3) -> dict:
    """Random probabilities, lognormal asset values and random costs; fixed by ``seed``."""
    if T < 1 or branching < 1:
        raise BadParams("need T >= 1 and branching >= 1")
    rng = np.random.default_rng(seed)
    nodes = [{"id": "0", "t": 0, "parent": None, "q": 1.0}]
    values = {"0": np.ones(d)}
    level = ["0"]
    for t in range(1, T + 1):
        nxt = []
        for par in level:
            q = rng.dirichlet(np.ones(branching))
            for b in range(branching):
                nid = f"{par}.{b}"
                nodes.append({"id": nid, "t": t, "parent": par, "q": float(q[b])})
                v = values[par] * np.exp(vol * rng.normal(size=d))
                v[0] = 1.0
                values[nid] = v
                nxt.append(nid)
        level = nxt
    by_node = {}
    for nd in nodes:
        m = d + N
        cost = rng.uniform(*cost_range, size=(m, m))
        by_node[nd["id"]] = {"bidask": _pi(np.concatenate([values[nd["id"]], np.ones(N)]), cost, kappa, d=d)}
    return {"schema": SCHEMA, "T": T, "d": d, "N": N, "nodes": nodes,
            "cones": {"by_node": by_node}, "return": {"kind": "zero"},
            "name": f"random_T{T}_b{branching}_seed{seed}"}


def with_return(inst: dict, kind: str = "zero", gamma: float = 0.5, p: float = 1.0, eta: float = 0.1) -> dict:
    """Attach a default return map of the given kind (payout in cash)."""
    N, d = inst["N"], inst["d"]
    if kind == "zero":
        inst["return"] = {"kind": "zero"}
    elif kind == "linear":
        mat = np.zeros((d + N, N))
        mat[0] = eta
        inst["return"] = {"kind": "linear", "matrix": mat.tolist()}
    elif kind == "cobb_douglas":
        inst["return"] = {"kind": "cobb_douglas", "gamma": [gamma / N] * N, "p": p, "eta": [eta] * N,
                          "payout_coord": 1}
    else:
        raise BadParams(f"unknown return kind {kind!r}")
    return inst
