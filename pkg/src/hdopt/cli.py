"""Command-line entry point.

Exit codes: 0 success, 1 config error, 2 runtime error, 3 theory-check
failure.
"""

from __future__ import annotations

import argparse
import sys

from .objectives import DatasetFormatError, make_blobs_dataset, save_dataset_csv
from .runner import ConfigError, parse_config, run_experiment, run_theory_suite

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_THEORY = 3

_GENERATORS = {"blobs": make_blobs_dataset}


def _parse_params(pairs):
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            params[key] = int(value)
        except ValueError:
            try:
                params[key] = float(value)
            except ValueError:
                params[key] = value
    return params


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hdo",
        description="Simulate hybrid populations of first- and zeroth-order "
                    "agents and verify their analytic bounds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment grid from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--seeds", help="comma-separated seed list overriding the config")
    p_run.add_argument("--out-dir", help="output directory overriding the config")
    p_run.add_argument("--threads", type=int, default=1,
                       help="worker processes for (population x seed) cells")
    p_run.add_argument("--metric-cadence", type=int,
                       help="record metrics every N scheduler steps")

    p_verify = sub.add_parser("verify", help="run the analytic-bound verification suite")
    p_verify.add_argument("config")
    p_verify.add_argument("--out-dir", help="where to write the report")

    p_gen = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p_gen.add_argument("kind", choices=sorted(_GENERATORS))
    p_gen.add_argument("params", nargs="*", help="generator key=value parameters")
    p_gen.add_argument("out", help="output CSV path")
    p_gen.add_argument("--header", action="store_true", help="write a header row")
    return parser


def _cmd_run(args):
    cfg = parse_config(args.config)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",") if s]
        if not seeds or len(set(seeds)) != len(seeds):
            raise ConfigError("--seeds must be a non-empty unique list")
        cfg.seeds = seeds
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if args.metric_cadence:
        if args.metric_cadence < 1:
            raise ConfigError("--metric-cadence must be >= 1")
        cfg.metric_cadence = args.metric_cadence
    result = run_experiment(cfg, threads=max(1, args.threads))
    print(f"wrote {len(result.csv_paths)} files to {result.out_dir}")
    return EXIT_OK


def _cmd_verify(args):
    cfg = parse_config(args.config)
    _, all_passed = run_theory_suite(cfg, out_dir=args.out_dir)
    if not all_passed:
        print("theory suite FAILED", file=sys.stderr)
        return EXIT_THEORY
    print("theory suite passed")
    return EXIT_OK


def _cmd_gen_data(args):
    params = _parse_params(args.params)
    if args.kind == "blobs":
        dataset = make_blobs_dataset(
            n=int(params.pop("n", 1000)), d=int(params.pop("d", 10)),
            seed=int(params.pop("seed", 0)),
            separation=float(params.pop("separation", 2.0)))
        if params:
            raise ConfigError(f"unknown generator parameter {next(iter(params))!r}")
    save_dataset_csv(dataset, args.out, header=args.header)
    print(f"wrote {len(dataset)} samples to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_gen_data(args)
    except (ConfigError, DatasetFormatError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
