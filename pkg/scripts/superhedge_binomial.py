"""Super-hedging price of a digital claim in a one-period binomial market as the bid-ask spread widens.

    python3 scripts/superhedge_binomial.py --costs 1,1.01,1.05,1.1
"""

import argparse
from dataclasses import dataclass

import numpy as np

from conic_market.dual import superhedge
from conic_market.generators import binomial
from conic_market.io import instance_from_dict

DIGITAL = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])  # pays one unit of cash in the up state


@dataclass
class Config:
    costs: tuple = (1.0, 1.01, 1.05, 1.1)
    up: float = 2.0
    down: float = 0.5


def main(cfg: Config) -> None:
    print(f"{'cost':>6} {'primal':>12} {'dual':>12} {'gap':>10}")
    for c in cfg.costs:
        m = instance_from_dict(binomial(T=1, cost=c, up=cfg.up, down=cfg.down)).market
        out = superhedge(m, DIGITAL)
        print(f"{c:6.3f} {out['primal_price']:12.8f} {out['dual_bound']:12.8f} {out['gap']:10.2e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--costs", default="1,1.01,1.05,1.1")
    args = ap.parse_args()
    main(Config(costs=tuple(float(v) for v in args.costs.split(","))))
