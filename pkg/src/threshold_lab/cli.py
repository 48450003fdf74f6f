"""Command line entry point: ``threshold-lab run|sweep|presets``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import ConfigError
from .scenario import load_config, preset_paths, run_scenario, sweep

OUT_ENV = "THRESHOLD_LAB_OUT"
DEFAULT_OUT = "threshold_lab_out"


def _out_root():
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def _add_overrides(p):
    p.add_argument("--cfl", type=float, help="override the CFL number")
    p.add_argument("--cells", type=int, help="override the number of grid cells")
    p.add_argument("--t-end", type=float, dest="t_end", help="override the final time")


def build_parser():
    parser = argparse.ArgumentParser(prog="threshold-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("config", help="scenario JSON file")
    p_run.add_argument("-o", "--out", help=f"output directory (default: ${OUT_ENV}/<name>)")
    _add_overrides(p_run)

    p_sweep = sub.add_parser("sweep", help="run several scenarios and tabulate them")
    p_sweep.add_argument("configs", nargs="+", help="scenario JSON files")
    p_sweep.add_argument("-o", "--out", help=f"output directory (default: ${OUT_ENV})")
    p_sweep.add_argument("--parallel", action="store_true", help="run scenarios in worker processes")
    _add_overrides(p_sweep)

    sub.add_parser("presets", help="print the paths of the shipped preset scenarios")
    return parser


def _load(path, args):
    cfg = load_config(path)
    return cfg.with_overrides(cfl=args.cfl, cells=args.cells, t_end=args.t_end)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for p in preset_paths():
            print(p)
        return 0
    try:
        if args.command == "run":
            cfg = _load(args.config, args)
            out = Path(args.out) if args.out else _out_root() / cfg.name
            outcome = run_scenario(cfg, out)
            if outcome.error:
                print(f"{cfg.name}: {outcome.error}", file=sys.stderr)
            if outcome.verdict is not None:
                v = outcome.verdict
                print(f"{cfg.name}: {v.branch}/{v.outcome} -> {out} "
                      f"(audit {outcome.audit_pass_count}/{len(outcome.audit)} passed)")
            return outcome.status
        configs = [_load(p, args) for p in args.configs]
        out = Path(args.out) if args.out else _out_root()
        rows = sweep(configs, out, parallel=args.parallel)
        for r in rows:
            print(f"{r['name']}: {r['branch']}/{r['outcome']}")
        print(f"summary: {out / 'sweep.csv'}")
        return max((r["status"] for r in rows), default=0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error on {exc.filename}: {exc.strerror or exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
