"""Command line: ``conic-market <command> [options]``.

Exit codes: 0 success (the verdict is in the payload), 1 usage error,
2 invalid instance, 3 solver failure.  Diagnostics go to standard error;
logging verbosity comes from ``CONIC_MARKET_LOG`` (quiet, info, debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import BadParams, ConicMarketError, Infeasible, SolverFailure, Unbounded

log = logging.getLogger("conic_market")

COMMANDS = ("validate", "check-na", "check-nar", "superhedge", "umax", "dual-gap", "gen")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    instance: str | None = None
    feas_tol: float = 1e-9
    gap_tol: float = 1e-9
    epsilons: list = field(default_factory=lambda: [0.5, 0.1, 0.01])
    x_grid: list = field(default_factory=list)
    y_grid: list = field(default_factory=list)
    box_factor: float = 1e3
    output: str | None = None
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.feas_tol <= 0 or self.gap_tol <= 0:
            raise UsageError("tolerances must be positive")
        if self.box_factor <= 0:
            raise UsageError("box factor must be positive")
        if self.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        for grid in (self.x_grid, self.y_grid):
            if list(grid) != sorted(grid):
                raise UsageError("grids must be sorted ascending")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="conic-market", description="Markets with proportional costs and nonlinear industrial returns.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, instance=True):
        if instance:
            sp.add_argument("--instance", required=True)
        sp.add_argument("--output")
        sp.add_argument("--tol", type=float, default=1e-9, help="nonlinear feasibility tolerance")
        sp.add_argument("--gap-tol", type=float, default=1e-9)
        sp.add_argument("--box-factor", type=float, default=1e3)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--dump-lp", help="write the first LP relaxation here")

    common(sub.add_parser("validate", help="parse and validate an instance"))
    common(sub.add_parser("check-na", help="no-arbitrage verdict with witness"))
    sp = sub.add_parser("check-nar", help="robust no-arbitrage over dominating markets")
    common(sp)
    sp.add_argument("--eps", type=_floats, default=[0.5, 0.1, 0.01])
    sp = sub.add_parser("superhedge", help="super-hedging price of the instance claim")
    common(sp)
    sp.add_argument("--x", type=_floats, help="base endowment (default 0)")
    sp = sub.add_parser("umax", help="optimal consumption")
    common(sp)
    sp.add_argument("--x", type=_floats, help="endowment (default from the instance)")
    sp = sub.add_parser("dual-gap", help="conjugate value vs dual search, as CSV")
    common(sp)
    sp.add_argument("--y", type=_floats, required=True)
    sp.add_argument("--x", type=_floats, default=[], help="extra x1 grid for the conjugate sweep")
    sp = sub.add_parser("gen", help="write a generated instance")
    common(sp, instance=False)
    sp.add_argument("kind", choices=["binomial", "chain", "random_tree"])
    sp.add_argument("--T", type=int, default=1)
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--N", type=int, default=1)
    sp.add_argument("--cost", type=float, default=1.0)
    sp.add_argument("--branching", type=int, default=2)
    sp.add_argument("--return", dest="return_kind", default="zero", choices=["zero", "linear", "cobb_douglas"])
    return p


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _payload(cfg: RunConfig, result: dict) -> str:
    body = {"version": __version__, "config": asdict(cfg), "result": result}
    return json.dumps(_clean(body), indent=1, sort_keys=True) + "\n"


def _solver_config(args):
    from .solve import SolverConfig

    return SolverConfig(feas_tol=args.tol, gap_tol=args.gap_tol, dump_path=args.dump_lp)


def _cmd_validate(args, cfg):
    from .io import load_instance
    from .market import check_R_axioms

    inst = load_instance(args.instance)
    m = inst.market
    out = {"valid": True, "name": inst.name, "T": m.tree.T, "d": m.d, "N": m.N, "nodes": m.tree.n_nodes,
           "return": m.returns.kind}
    if not m.returns.identically_zero:
        out["return_axioms"] = check_R_axioms(m, seed=args.seed).to_dict()
    return out


def _cmd_check_na(args, cfg):
    from .arbitrage import check_na
    from .io import load_instance

    inst = load_instance(args.instance)
    return check_na(inst.market, args.box_factor, _solver_config(args)).to_dict()


def _cmd_check_nar(args, cfg):
    from .arbitrage import check_nar
    from .io import load_instance

    inst = load_instance(args.instance)
    return check_nar(inst.market, args.eps, args.box_factor, _solver_config(args), jobs=args.jobs).to_dict()


def _cmd_superhedge(args, cfg):
    from .dual import superhedge
    from .io import load_instance

    inst = load_instance(args.instance)
    if inst.claim is None:
        raise UsageError("instance has no claim")
    x = None if args.x is None else np.asarray(args.x, float)
    try:
        return superhedge(inst.market, inst.claim, x, inst.constant, args.box_factor, _solver_config(args))
    except Infeasible:
        return {"primal_price": np.inf, "dual_bound": None, "gap": None, "certificate_plan": None,
                "binding_candidate": None, "note": "claim cannot be super-hedged"}
    except Unbounded:
        return {"primal_price": -np.inf, "dual_bound": None, "gap": None, "certificate_plan": None,
                "binding_candidate": None}


def _cmd_umax(args, cfg):
    from .io import load_instance
    from .utility import solve_primal, verify_consumption

    inst = load_instance(args.instance)
    if inst.utility is None:
        raise UsageError("instance has no utility")
    x = args.x if args.x is not None else inst.endowment
    if x is None:
        raise UsageError("no endowment given")
    x = np.asarray(x, float)
    cfg_s = _solver_config(args)
    res = solve_primal(inst.market, inst.utility, x, args.box_factor, cfg_s)
    out = res.to_dict(inst.market.tree)
    if res.status == "Optimal":
        feasible, value = verify_consumption(inst.market, inst.utility, x, res)
        out["verified"] = {"feasible": feasible, "value": value}
    return out


def _cmd_dual_gap(args, cfg):
    from .io import load_instance
    from .utility import duality_gap

    inst = load_instance(args.instance)
    if inst.utility is None:
        raise UsageError("instance has no utility")
    report = duality_gap(inst.market, inst.utility, args.y, args.x, jobs=args.jobs)
    header = f"# conic_market {__version__}\n# config {json.dumps(_clean(asdict(cfg)), sort_keys=True)}\n"
    return header + report.to_csv()


def _cmd_gen(args, cfg):
    from . import generators as gen
    from .io import instance_from_dict

    if args.kind == "binomial":
        if args.d not in (None, 2) or args.N != 1:
            raise BadParams("binomial instances have d = 2 and N = 1")
        inst = gen.binomial(args.T, args.cost)
    elif args.kind == "chain":
        inst = gen.chain(args.T, args.d or 1, args.N, args.cost)
    else:
        inst = gen.random_tree(args.T, args.branching, args.d or 2, args.N, args.seed)
    gen.with_return(inst, args.return_kind)
    instance_from_dict(inst)  # generated instances must validate
    return json.dumps(inst, indent=1, sort_keys=True) + "\n"


HANDLERS = {
    "validate": _cmd_validate,
    "check-na": _cmd_check_na,
    "check-nar": _cmd_check_nar,
    "superhedge": _cmd_superhedge,
    "umax": _cmd_umax,
    "dual-gap": _cmd_dual_gap,
    "gen": _cmd_gen,
}


def _configure_logging():
    level = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("CONIC_MARKET_LOG", "quiet"), logging.ERROR)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")


def run(argv=None) -> int:
    _configure_logging()
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig(
            command=args.command,
            instance=getattr(args, "instance", None),
            feas_tol=args.tol,
            gap_tol=args.gap_tol,
            epsilons=list(getattr(args, "eps", [0.5, 0.1, 0.01])),
            x_grid=list(getattr(args, "x", None) or []) if args.command == "dual-gap" else [],
            y_grid=list(getattr(args, "y", None) or []),
            box_factor=args.box_factor,
            output=args.output,
            seed=args.seed,
            jobs=args.jobs,
        )
        result = HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except BadParams as exc:
        print(f"bad parameters: {exc}", file=sys.stderr)
        return 1
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except (ConicMarketError, OSError) as exc:
        print(f"invalid instance: {exc}", file=sys.stderr)
        return 2
    text = result if isinstance(result, str) else _payload(cfg, result)
    _emit(text, args.output)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
