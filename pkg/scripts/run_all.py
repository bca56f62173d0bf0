#!/usr/bin/env python3
"""Run every experiment with its packaged config and collect the reports.

    python scripts/run_all.py --out runs/ [--seed 0] [--trials N] [--workers N]

Each experiment writes to ``<out>/<subcommand>/``. Exit status is the
worst CLI exit code seen.
"""

import argparse
import sys
import time
from pathlib import Path

from conformal_cal.harness.cli import SUBCOMMANDS, main


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", default="0")
    p.add_argument("--trials", help="override every config's trial count")
    p.add_argument("--workers", default="1")
    p.add_argument("--only", nargs="*", choices=sorted(SUBCOMMANDS), help="subset of experiments")
    args = p.parse_args(argv)

    worst = 0
    for sub in args.only or SUBCOMMANDS:
        cli = [sub, "--seed", args.seed, "--workers", args.workers, "--out", str(Path(args.out) / sub)]
        if args.trials:
            cli += ["--trials", args.trials]
        t0 = time.perf_counter()
        rc = main(cli)
        print(f"== {sub}: exit {rc} in {time.perf_counter() - t0:.1f}s\n", flush=True)
        worst = max(worst, rc)
    return worst


if __name__ == "__main__":
    sys.exit(run())
