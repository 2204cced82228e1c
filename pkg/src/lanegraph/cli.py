"""Command line entry point: ``lanegraph <stage> --config FILE [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .pipeline import STAGES, ConfigError, MissingArtifact, load_config, run_pipeline

ENV_OUT = "LANEGRAPH_OUT"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lanegraph", description="Lane-graph pipeline on synthetic fleet data.")
    ap.add_argument("command", choices=STAGES)
    ap.add_argument("--config", help="YAML or JSON experiment config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help=f"output directory (default: ${ENV_OUT} or runs/default)")
    ap.add_argument("--n-minimaps", dest="n_minimaps", type=int)
    ap.add_argument("--eval-fraction", dest="eval_fraction", type=float)
    ap.add_argument("--profile", choices=("toy", "paper"))
    ap.add_argument("--methods", help="comma separated subset of b1,b2,b3,b4,lmtnet")
    ap.add_argument("--aggregation", choices=("pooled", "per_minimap"))
    ap.add_argument("--n-plots", dest="n_plots", type=int)
    ap.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                    help="override any config key, e.g. train.epochs=5 (repeatable)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in ("seed", "out", "n_minimaps", "eval_fraction", "profile",
                                               "methods", "aggregation", "n_plots")}
    if overrides["out"] is None and os.environ.get(ENV_OUT):
        overrides["out"] = os.environ[ENV_OUT]
    try:
        cfg = load_config(args.config, overrides, args.sets)
        result = run_pipeline(args.command, cfg)
    except (ConfigError, MissingArtifact, FileNotFoundError) as exc:
        print(f"lanegraph {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"lanegraph {args.command}: error: {exc}", file=sys.stderr)
        return 1
    for key, val in result.items():
        if key == "report":
            print(val.to_markdown())
        elif isinstance(val, list):
            for v in val:
                print(f"{key}: {v}")
        else:
            print(f"{key}: {val}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
