"""Command line entry point: ``pourkit <command> [options]``.

Exit codes: 0 success, 1 runtime error, 2 invalid input or config.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments
from .config import load_config
from .errors import InputError, PourkitError
from .geometry import fill_height, load_obj, mesh_volume
from .observation import ML


def _common() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by
    # the subparser's own default.
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="experiment config (YAML)")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    p.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    p.add_argument(
        "--estimator", choices=experiments.ESTIMATORS, default=argparse.SUPPRESS, help="volume estimator"
    )
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="pours run concurrently")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="pourkit", description=__doc__, parents=[common])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", parents=[common], help="run data-collection pours")
    p.add_argument("--count", type=int, help="number of sequences (default from config)")

    p = sub.add_parser("fit-transition", parents=[common], help="fit the volume transition model")
    p.add_argument("dataset", type=Path)

    p = sub.add_parser("fit-regressor", parents=[common], help="fit the pixel-count baseline")
    p.add_argument("dataset", type=Path)

    p = sub.add_parser("relabel", parents=[common], help="Viterbi ground truth for a dataset")
    p.add_argument("dataset", type=Path)
    p.add_argument("--transition", type=Path, help="transition JSON (default: fit from simulator truth)")

    p = sub.add_parser("evaluate", parents=[common], help="closed-loop evaluation pours")
    p.add_argument("--transition", type=Path, help="transition JSON (default: OUT/transition.json)")
    p.add_argument("--regressor", type=Path, help="regressor JSON (default: OUT/regressor.json)")
    p.add_argument("--per-container", type=int, help="pours per target container")

    p = sub.add_parser("mesh", parents=[common], help="mesh volume and fill-height tools")
    msub = p.add_subparsers(dest="mesh_command", required=True)
    m = msub.add_parser("volume", help="print the enclosed volume in ml")
    m.add_argument("path", type=Path)
    m = msub.add_parser("fill-height", help="print the fill height in mm for a volume")
    m.add_argument("path", type=Path)
    m.add_argument("ml", type=float)
    return ap


def _mesh(args) -> int:
    mesh = load_obj(args.path)
    if args.mesh_command == "volume":
        print(f"{mesh_volume(mesh) / ML:.3f}")
    else:
        print(f"{fill_height(mesh, args.ml * ML) * 1000.0:.3f}")
    return 0


def run(args) -> int:
    if args.command == "mesh":
        return _mesh(args)
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    out = Path(getattr(args, "out", None) or cfg.output_dir)
    jobs = getattr(args, "jobs", 1)
    if jobs < 1:
        raise InputError("--jobs must be at least 1")

    if args.command == "collect":
        if args.count is not None and args.count < 1:
            raise InputError("--count must be at least 1")
        experiments.cmd_collect(cfg, out, args.count, jobs)
        print(out)
    elif args.command == "fit-transition":
        out.mkdir(parents=True, exist_ok=True)
        path = out / "transition.json"
        experiments.cmd_fit_transition(cfg, args.dataset, path)
        print(path)
    elif args.command == "fit-regressor":
        out.mkdir(parents=True, exist_ok=True)
        path = out / "regressor.json"
        report = experiments.cmd_fit_regressor(cfg, args.dataset, path)
        print(json.dumps(report, sort_keys=True))
    elif args.command == "relabel":
        report = experiments.cmd_relabel(cfg, args.dataset, args.transition, jobs)
        for s in report["sequences"]:
            print(f"{s['id']}  rmse {s['rmse_ml']:.2f} ml  bin match {s['bin_match']:.4f}")
        print(f"mean rmse {report['mean_rmse_ml']:.2f} ml (bin width {report['bin_width_ml']:g} ml)")
    elif args.command == "evaluate":
        summary = experiments.cmd_evaluate(
            cfg,
            out,
            args.transition or out / "transition.json",
            getattr(args, "estimator", "model-based"),
            args.regressor or out / "regressor.json",
            args.per_container,
            jobs,
        )
        print(json.dumps(summary, sort_keys=True))
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args)
    except PourkitError as exc:
        print(f"pourkit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"pourkit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
