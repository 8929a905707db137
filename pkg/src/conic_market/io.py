"""JSON instances: a tree, per-node cones, returns, and optional extras.

Schema (version 1)::

    {"schema": 1, "T": 2, "d": 2, "N": 1,
     "nodes": [{"id": "0", "t": 0, "parent": null, "q": 1.0}, ...],
     "cones": {"default": {"bidask": [[...]]},
               "by_time": {"1": {"generators": [[...]]}},
               "by_node": {"u": {"bidask": [[...]]}}},
     "return": {"kind": "zero" | "linear" | "cobb_douglas", ...},
     "utility": {"kind": "coordinate_sum", "u": "log", "p": 0.5, "beta": 1.0},
     "claim": {"<leaf id>": [g_1, ..., g_{d+N}]},
     "endowment": [x_1, ..., x_{d+N}],
     "constant": c,
     "name": "...", "description": "..."}

Cone precedence is node over time over default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .cone import PolyCone, from_bid_ask
from .errors import DimensionMismatch, InstanceError
from .market import Market
from .returns import ReturnSpec, ZeroReturn, return_from_dict
from .tree import EventTree, build_tree
from .utility import UtilityFamily, utility_from_dict, utility_to_dict

SCHEMA_VERSION = 1
_TOP = {"schema", "T", "d", "N", "nodes", "cones", "return", "utility", "claim", "endowment",
        "constant", "name", "description"}
_REQUIRED = {"schema", "T", "d", "N", "nodes", "cones"}


@dataclass
class Instance:
    market: Market
    utility: UtilityFamily | None = None
    claim: np.ndarray | None = None  # (n_leaves, d+N) in tree.leaves order
    endowment: np.ndarray | None = None
    constant: float | None = None
    name: str | None = None
    description: str | None = None
    raw: dict | None = None

    @property
    def tree(self) -> EventTree:
        return self.market.tree


def _cone_from(spec: Mapping[str, Any], m: int) -> PolyCone:
    if not isinstance(spec, Mapping) or len(spec) != 1:
        raise InstanceError("a cone is {'bidask': matrix} or {'generators': rows}")
    (kind, val), = spec.items()
    if kind == "bidask":
        cone = from_bid_ask(val)
    elif kind == "generators":
        cone = PolyCone(np.asarray(val, float))
    else:
        raise InstanceError(f"unknown cone form {kind!r}")
    if cone.dim != m:
        raise DimensionMismatch(f"cone of dimension {cone.dim}, expected {m}")
    return cone


def _cones(spec: Mapping[str, Any], tree: EventTree) -> list[PolyCone]:
    extra = set(spec) - {"default", "by_time", "by_node"}
    if extra:
        raise InstanceError(f"unknown cone fields: {sorted(extra)}")
    m = tree.d + tree.N
    cache: dict[str, PolyCone] = {}

    def get(key, s):
        if key not in cache:
            cache[key] = _cone_from(s, m)
        return cache[key]

    by_time = {str(k): v for k, v in spec.get("by_time", {}).items()}
    by_node = {str(k): v for k, v in spec.get("by_node", {}).items()}
    known = {str(i) for i in tree.ids}
    stray = set(by_node) - known
    if stray:
        raise InstanceError(f"cones given for unknown nodes: {sorted(stray)}")
    out = []
    for i, nid in enumerate(tree.ids):
        t = str(int(tree.time[i]))
        if str(nid) in by_node:
            out.append(get("n" + str(nid), by_node[str(nid)]))
        elif t in by_time:
            out.append(get("t" + t, by_time[t]))
        elif "default" in spec:
            out.append(get("default", spec["default"]))
        else:
            raise InstanceError(f"no cone for node {nid!r}")
    return out


def instance_from_dict(data: Mapping[str, Any], validate: bool = True) -> Instance:
    if not isinstance(data, Mapping):
        raise InstanceError("instance must be a JSON object")
    extra = set(data) - _TOP
    if extra:
        raise InstanceError(f"unknown instance fields: {sorted(extra)}")
    missing = _REQUIRED - set(data)
    if missing:
        raise InstanceError(f"missing instance fields: {sorted(missing)}")
    if data["schema"] != SCHEMA_VERSION:
        raise InstanceError(f"unsupported schema version {data['schema']!r}")
    tree = build_tree({k: data[k] for k in ("T", "d", "N", "nodes")})
    cones = _cones(data["cones"], tree)
    returns = return_from_dict(data["return"], tree) if "return" in data else ZeroReturn(tree.d, tree.N)
    market = Market(tree, cones, returns, validate=validate, name=data.get("name"))
    utility = utility_from_dict(data["utility"], tree.T, tree.d) if "utility" in data else None
    claim = None
    if "claim" in data:
        by_id = {str(k): v for k, v in data["claim"].items()}
        leaf_ids = [str(tree.ids[l]) for l in tree.leaves]
        if set(by_id) != set(leaf_ids):
            raise InstanceError("claim must give one vector per leaf")
        claim = np.array([by_id[k] for k in leaf_ids], float)
        if claim.shape[1] != market.m:
            raise DimensionMismatch("claim vectors must have length d + N")
    endowment = None
    if "endowment" in data:
        endowment = np.asarray(data["endowment"], float)
        if endowment.shape != (market.m,):
            raise DimensionMismatch("endowment must have length d + N")
        if np.any(endowment[market.d:] < 0):
            raise InstanceError("industrial endowment must be nonnegative")
    const = float(data["constant"]) if "constant" in data else None
    return Instance(market, utility, claim, endowment, const, data.get("name"), data.get("description"), dict(data))


def load_instance(path, validate: bool = True) -> Instance:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not valid JSON ({exc})") from None
    return instance_from_dict(data, validate)


def _cone_to_dict(cone: PolyCone) -> dict:
    if cone.bidask is not None:
        return {"bidask": np.asarray(cone.bidask).tolist()}
    return {"generators": cone.generators.tolist()}


def instance_to_dict(inst: Instance) -> dict:
    market = inst.market
    tree = market.tree
    if not market.returns.serializable:
        raise InstanceError("callback returns cannot be written to JSON")
    out = tree.to_dict()
    out["schema"] = SCHEMA_VERSION
    first = market.cones[0]
    by_node = {str(tree.ids[i]): _cone_to_dict(c) for i, c in enumerate(market.cones) if c is not first}
    out["cones"] = {"default": _cone_to_dict(first)}
    if by_node:
        out["cones"]["by_node"] = by_node
    out["return"] = market.returns.to_dict(tree)
    if inst.utility is not None:
        out["utility"] = utility_to_dict(inst.utility)
    if inst.claim is not None:
        out["claim"] = {str(tree.ids[l]): v.tolist() for l, v in zip(tree.leaves, inst.claim)}
    if inst.endowment is not None:
        out["endowment"] = inst.endowment.tolist()
    if inst.constant is not None:
        out["constant"] = inst.constant
    for key in ("name", "description"):
        if getattr(inst, key):
            out[key] = getattr(inst, key)
    return out


def dump_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1, sort_keys=True) + "\n")
