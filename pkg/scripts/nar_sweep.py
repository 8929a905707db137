"""No-arbitrage and robust no-arbitrage verdicts over seeded random trees.

    python3 scripts/nar_sweep.py --seeds 20 --T 2
"""

import argparse
from collections import Counter
from dataclasses import dataclass

from conic_market.arbitrage import check_na, check_nar
from conic_market.generators import random_tree, with_return
from conic_market.io import instance_from_dict


@dataclass
class Config:
    seeds: int = 20
    T: int = 2
    d: int = 2
    ret: str = "zero"
    epsilons: tuple = (0.5, 0.1, 0.01)


def main(cfg: Config) -> None:
    tally = Counter()
    for seed in range(cfg.seeds):
        inst = with_return(random_tree(T=cfg.T, d=cfg.d, seed=seed), cfg.ret)
        m = instance_from_dict(inst).market
        na = check_na(m).verdict
        nar = check_nar(m, cfg.epsilons).verdict
        tally[(na, nar)] += 1
        print(f"seed {seed:3d}  {na:12s} {nar}")
    for (na, nar), n in sorted(tally.items()):
        print(f"# {na} / {nar}: {n}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--T", type=int, default=2)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--return", dest="ret", default="zero", choices=["zero", "linear", "cobb_douglas"])
    args = ap.parse_args()
    main(Config(args.seeds, args.T, args.d, args.ret))
