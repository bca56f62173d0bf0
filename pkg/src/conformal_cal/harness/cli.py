"""``conformal-cal`` command line.

    conformal-cal <subcommand> --config <path> --seed <u64> --trials <n> --out <dir> [--workers <n>]

Subcommands: power-control, hyperparam, beam, counterfactual, validate.
``--config`` may be omitted to use the packaged default for the subcommand.

Exit codes: 0 success, 1 config error, 2 runtime failure, 3 a declared
acceptance target was missed.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback

from ..errors import ConfigError
from .config import load_config, validate_config
from .experiments import RUNNERS
from .report import render_text, write_report

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_TARGET = 0, 1, 2, 3

SUBCOMMANDS = {
    "power-control": "power_control",
    "hyperparam": "hyperparam",
    "beam": "beam",
    "counterfactual": "counterfactual",
}

log = logging.getLogger("conformal_cal")


def _u64(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conformal-cal", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in list(SUBCOMMANDS) + ["validate"]:
        s = sub.add_parser(name)
        s.add_argument("--config", help="INI config file (default: packaged config)")
        s.add_argument("--seed", type=_u64, help="base seed (overrides config)")
        s.add_argument("--trials", type=_positive, help="Monte-Carlo trials (overrides config)")
        s.add_argument("--workers", type=_positive, help="worker processes (overrides config)")
        if name == "validate":
            s.add_argument("--experiment", choices=sorted(SUBCOMMANDS), help="subcommand the config is for")
        else:
            s.add_argument("--out", required=True, help="output directory")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args, experiment):
    cfg = load_config(args.config, experiment)
    for key in ("seed", "trials", "workers"):
        v = getattr(args, key)
        if v is not None:
            setattr(cfg, key, v)
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse usage errors count as config errors
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    if args.command == "validate":
        experiment = SUBCOMMANDS.get(args.experiment) if args.experiment else None
        try:
            cfg = _load(args, experiment)
        except ConfigError as exc:
            print("\n".join(exc.violations), file=sys.stderr)
            return EXIT_CONFIG
        problems = validate_config(cfg)
        for msg in problems:
            print(msg, file=sys.stderr)
        if not problems:
            print(f"{cfg.experiment}: ok")
        return EXIT_CONFIG if problems else EXIT_OK

    experiment = SUBCOMMANDS[args.command]
    try:
        cfg = _load(args, experiment)
        problems = validate_config(cfg)
        if problems:
            raise ConfigError(problems)
    except ConfigError as exc:
        print("config error:", file=sys.stderr)
        for msg in exc.violations:
            print(f"  {msg}", file=sys.stderr)
        return EXIT_CONFIG

    log.info("running %s: seed=%d trials=%d workers=%d", experiment, cfg.seed, cfg.trials, cfg.workers)
    try:
        report = RUNNERS[experiment](cfg)
        write_report(report, args.out)
    except ConfigError as exc:
        print("\n".join(exc.violations), file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return EXIT_RUNTIME
    print(render_text(report), end="")
    return EXIT_OK if report.passed else EXIT_TARGET


if __name__ == "__main__":
    sys.exit(main())
