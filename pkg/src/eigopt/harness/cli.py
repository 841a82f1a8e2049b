"""Command-line entry point: ``eigopt <subcommand> [options]``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical abort.
"""
import argparse
import json
import os
import sys

import numpy as np

from ..errors import CapabilityError, ConfigError, ContractError, NumericalAbort
from . import io
from .config import RunConfig
from .presets import PRESETS, get_preset
from .runner import evaluate_design, run_one, run_sequential, sweep, trap_design

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--preset", choices=sorted(PRESETS), help="experiment preset")
    p.add_argument("--config", help="JSON run configuration (overrides --preset)")
    p.add_argument("--bound", default="ace", help="ace, pce, ba or ace_lf")
    p.add_argument("--dim", type=int, help="advertising dimension D")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--lr", type=float, help="initial design learning rate")
    p.add_argument("--lr-final", type=float)
    p.add_argument("--phi-lr", type=float)
    p.add_argument("--xi-mode")
    p.add_argument("--phi-mode")
    p.add_argument("--jitter", type=float)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--full-scale", action="store_true", help="full-size evaluation settings")
    p.add_argument("--out", help="output directory (default under $%s)" % io.ENV_OUTPUT_ROOT)
    p.add_argument("--quiet", action="store_true")


def build_parser():
    parser = _Parser(prog="eigopt", description="Variational EIG bounds and gradient-based design.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    p = sub.add_parser("run", help="optimise a design")
    _common(p)
    p = sub.add_parser("eval", help="oracle evaluation of a saved design")
    _common(p)
    p.add_argument("--design", required=True, help="design.json from run, or a JSON array")
    p = sub.add_parser("trap", help="ACE/VNMC trap of a saved design")
    _common(p)
    p.add_argument("--design", required=True)
    p = sub.add_parser("sweep", help="seeded replicates of one configuration")
    _common(p)
    p.add_argument("--replicates", type=int, default=4)
    p.add_argument("--workers", type=int, default=1)
    p = sub.add_parser("sequential", help="iterated design loop")
    _common(p)
    p.add_argument("--rounds", type=int)
    sub.add_parser("selftest", help="run the invariant checks")
    return parser


def config_from_args(args):
    if args.config:
        cfg = RunConfig.load(args.config)
    elif args.preset:
        kw = {}
        if args.dim is not None:
            kw["dim"] = args.dim
        if args.full_scale:
            kw["full_scale"] = True
        cfg = get_preset(args.preset, bound=args.bound, **kw)
    else:
        raise ConfigError("either --preset or --config is required")
    overrides = {"steps": args.steps, "N": args.N, "L": args.L, "lr0": args.lr,
                 "lr_final": args.lr_final, "phi_lr0": args.phi_lr, "xi_mode": args.xi_mode,
                 "phi_mode": args.phi_mode, "jitter": args.jitter,
                 "checkpoint_every": args.checkpoint_every}
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg.validate()


def _out_dir(args, cfg, leaf):
    if args.out:
        return args.out
    return os.path.join(io.output_root(), f"{cfg.preset}_{cfg.bound}_{cfg.hash()}", leaf)


def _load_design(path):
    doc = io.read_json(path)
    if isinstance(doc, dict):
        doc = doc.get("final_design", doc.get("design"))
    if doc is None:
        raise ConfigError(f"{path} holds no design")
    return np.asarray(doc, dtype=np.float64)


def _say(args, msg):
    if not getattr(args, "quiet", False):
        print(msg)


def _dispatch(args):
    if args.command == "selftest":
        from .selftest import run_selftest
        failures = run_selftest()
        print(f"selftest: {failures} failure(s)")
        return EXIT_OK if failures == 0 else 1
    cfg = config_from_args(args)
    if args.command == "run":
        out = _out_dir(args, cfg, f"seed_{args.seed}")
        io.write_json(os.path.join(out, "config.json"), cfg.to_dict())
        s = run_one(cfg, args.seed, out)
        _say(args, json.dumps({"out": out, "final_design": np.asarray(s["final_design"]).tolist(),
                               "final_smoothed": s["final_smoothed"]}))
    elif args.command == "eval":
        xi = _load_design(args.design)
        res = evaluate_design(cfg, xi, seed=args.seed)
        out = args.out or os.path.dirname(os.path.abspath(args.design))
        io.write_json(os.path.join(out, "eval.json"), res)
        _say(args, json.dumps(io._jsonable(res)))
    elif args.command == "trap":
        xi = _load_design(args.design)
        res = trap_design(cfg, xi, seed=args.seed)
        out = args.out or os.path.dirname(os.path.abspath(args.design))
        io.write_json(os.path.join(out, "trap.json"), res.to_dict())
        _say(args, json.dumps(io._jsonable(res.to_dict())))
    elif args.command == "sweep":
        out = _out_dir(args, cfg, f"sweep_root{args.seed}")
        rows = sweep(cfg, args.replicates, root_seed=args.seed, workers=args.workers, out_dir=out)
        _say(args, json.dumps(io._jsonable({"out": out, "replicates": rows})))
    elif args.command == "sequential":
        out = _out_dir(args, cfg, f"sequential_seed_{args.seed}")
        hist = run_sequential(cfg, args.seed, out, rounds=args.rounds)
        _say(args, json.dumps(io._jsonable({"out": out, "metrics": hist.metrics})))
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return _dispatch(args)
    except (ConfigError, CapabilityError, ContractError) as exc:
        print(f"eigopt: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"eigopt: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
