"""Conjugate value w(y) against the dual search on a bundled utility fixture.

    python3 scripts/duality_sweep.py --fixture binomial_power --y 0.25,0.5,1,2,4
"""

import argparse
from dataclasses import dataclass

from conic_market.fixtures import fixture
from conic_market.utility import duality_gap


@dataclass
class Config:
    fixture: str = "det_log"
    y_grid: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    jobs: int = 1


def main(cfg: Config) -> None:
    inst = fixture(cfg.fixture)
    report = duality_gap(inst.market, inst.utility, cfg.y_grid, jobs=cfg.jobs)
    print(report.to_csv(), end="")
    print(f"# weak duality holds: {report.weak_duality_ok}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fixture", default="det_log", choices=["det_log", "binomial_power"])
    ap.add_argument("--y", default="0.25,0.5,1,2,4")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    main(Config(args.fixture, tuple(float(v) for v in args.y.split(",")), args.jobs))
