"""Bundled instances with known answers, as JSON-ready dicts.

``python3 -m conic_market.fixtures`` rewrites ``instances/*.json`` from
these builders.
"""

from __future__ import annotations

import json
from pathlib import Path

from .generators import binomial, chain
from .io import Instance, instance_from_dict

INSTANCE_DIR = Path(__file__).parent / "instances"


def arb_cycle() -> dict:
    """Cash <-> industrial round trip returns more than it costs."""
    inst = chain(T=1)
    inst["cones"] = {"default": {"bidask": [[1.0, 0.9], [1.0, 1.0]]}}
    inst["name"] = "arb_cycle"
    inst["description"] = "pi12 * pi21 = 0.9 < 1: buy industrial with 0.9 cash, sell it for 1."
    return inst


def binomial_frictionless() -> dict:
    inst = binomial(T=1, cost=1.0)
    inst["claim"] = {"u": [1.0, 0.0, 0.0], "d": [0.0, 0.0, 0.0]}
    inst["name"] = "binomial_frictionless"
    inst["description"] = "One-period binomial, stock 1 -> 2 or 0.5; digital cash claim worth 1/3."
    return inst


def binomial_bidask() -> dict:
    inst = binomial(T=1, cost=1.01)
    inst["claim"] = {"u": [1.0, 0.0, 0.0], "d": [0.0, 0.0, 0.0]}
    inst["name"] = "binomial_bidask_1.01"
    inst["description"] = "Same digital claim with a 1% proportional cost on stock trades."
    return inst


def na_not_nar() -> dict:
    """Investment pays exactly its round-trip cost: no arbitrage, but any
    cost reduction or return increase creates one."""
    inst = chain(T=1)
    inst["cones"] = {"default": {"bidask": [[1.0, 1.1], [1.0, 1.0]]}}
    inst["return"] = {"kind": "linear", "matrix": [[0.1], [0.0]]}
    inst["name"] = "na_not_nar"
    inst["description"] = "Buy industrial at 1.1, it returns 0.1 cash, sell it back at 1."
    return inst


def strict_cost_binomial() -> dict:
    inst = binomial(T=1, cost=1.01)
    inst["name"] = "strict_cost_binomial"
    inst["description"] = "Binomial with 1% stock costs and a 2x industrial conversion factor."
    return inst


def strict_cost_cobb_douglas() -> dict:
    inst = chain(T=1, kappa=2.0)
    inst["nodes"] = [
        {"id": "0", "t": 0, "parent": None, "q": 1.0},
        {"id": "u", "t": 1, "parent": "0", "q": 0.5},
        {"id": "d", "t": 1, "parent": "0", "q": 0.5},
    ]
    inst["return"] = {"kind": "cobb_douglas", "gamma": [0.5], "p": {"u": 1.0, "d": 0.0},
                      "eta": [0.2], "payout_coord": 1}
    inst["name"] = "strict_cost_cobb_douglas"
    inst["description"] = "Production pays only in the up state; the down state loses the operating cost."
    return inst


def det_log() -> dict:
    inst = chain(T=1)
    inst["utility"] = {"kind": "coordinate_sum", "u": "log"}
    inst["endowment"] = [1.0, 0.0]
    inst["name"] = "det_log"
    inst["description"] = "Two dates, log utility of cash, no frictions, no returns: c = (x/2, x/2)."
    return inst


def binomial_power() -> dict:
    inst = binomial(T=1, cost=1.0)
    inst["utility"] = {"kind": "first_coordinate", "u": "power", "p": 0.5}
    inst["endowment"] = [1.0, 0.0, 0.0]
    inst["name"] = "binomial_power"
    inst["description"] = "Square-root utility of cash consumption in the frictionless binomial."
    return inst


def non_cone() -> dict:
    inst = chain(T=1)
    inst["return"] = {"kind": "cobb_douglas", "gamma": [0.5], "p": 1.0, "eta": [0.5], "payout_coord": 1}
    inst["claim"] = {"1": [0.3, 0.0]}
    inst["endowment"] = [0.0, 0.0]
    inst["name"] = "non_cone"
    inst["description"] = "Net profit sqrt(a) - a/2 peaks at 0.5 cash, so g = 0.3 is reachable and 2g is not."
    return inst


def bad_probs() -> dict:
    inst = binomial(T=1)
    inst["nodes"][2]["q"] = 0.4
    inst["name"] = "bad_probs"
    inst["description"] = "Child probabilities sum to 0.9."
    return inst


BUILDERS = {
    "arb_cycle": arb_cycle,
    "binomial_frictionless": binomial_frictionless,
    "binomial_bidask_1.01": binomial_bidask,
    "na_not_nar": na_not_nar,
    "strict_cost_binomial": strict_cost_binomial,
    "strict_cost_cobb_douglas": strict_cost_cobb_douglas,
    "det_log": det_log,
    "binomial_power": binomial_power,
    "non_cone": non_cone,
    "bad_probs": bad_probs,
}


def fixture(name: str, validate: bool = True) -> Instance:
    return instance_from_dict(BUILDERS[name](), validate)


def instance_path(name: str) -> Path:
    return INSTANCE_DIR / f"{name}.json"


def write_all(directory: Path = INSTANCE_DIR) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, build in BUILDERS.items():
        path = directory / f"{name}.json"
        path.write_text(json.dumps(build(), indent=1, sort_keys=True) + "\n")
        out.append(path)
    return out


if __name__ == "__main__":
    for p in write_all():
        print(p)
