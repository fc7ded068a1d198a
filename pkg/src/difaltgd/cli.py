"""Command-line entry point: ``difaltgd run | list-presets | validate-config``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, DifAltGDError
from .harness import LONG_RUNNING, PRESETS, ExperimentConfig, load_config, preset, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _resolve(args):
    if args.config:
        config = load_config(args.config, preset(args.preset) if args.preset else None)
    elif args.preset:
        config = preset(args.preset)
    else:
        config = ExperimentConfig()
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.base_seed is not None:
        overrides["base_seed"] = args.base_seed
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.algorithms:
        overrides["algorithms"] = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    return ExperimentConfig.from_dict(overrides, config)


def build_parser():
    parser = argparse.ArgumentParser(prog="difaltgd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write CSV/JSON outputs")
    run.add_argument("--preset", choices=PRESETS)
    run.add_argument("--config", help="YAML config file")
    run.add_argument("--trials", type=int)
    run.add_argument("--base-seed", type=int)
    run.add_argument("--out-dir")
    run.add_argument("--workers", type=int)
    run.add_argument("--algorithms", help="comma-separated subset of central,dif,dec,dgd")

    sub.add_parser("list-presets", help="print the available presets")

    val = sub.add_parser("validate-config", help="check a config file and print the resolved values")
    val.add_argument("path")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "list-presets":
        for name in PRESETS:
            cfg = preset(name)
            tag = "  (long-running)" if name in LONG_RUNNING else ""
            print(f"{name:12s} d={cfg.d} T={cfg.T} r={cfg.r} n={cfg.n} L={cfg.L} p={cfg.p} "
                  f"T_con={cfg.T_con_GD} T_GD={cfg.T_GD} trials={cfg.trials}{tag}")
        return EXIT_OK

    if args.command == "validate-config":
        try:
            cfg = load_config(args.path)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for key, value in cfg.to_dict().items():
            print(f"{key}: {value}")
        return EXIT_OK

    try:
        config = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(config)
    except (DifAltGDError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{len(result.traces)} trials completed, {len(result.failures)} failed; outputs in {config.out_dir}")
    for name, path in result.paths.items():
        print(f"  {name}: {path}")
    return EXIT_RUNTIME if not result.traces else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
