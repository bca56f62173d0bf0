#!/usr/bin/env python3
"""Long-run risk and mean set size of global vs localized online calibration
across target risk levels (beam selection scenario, packaged config).

    python scripts/beam_alpha_sweep.py [--alphas 0.05 0.1 0.2] [--horizon 10000] [--seed 0]
"""

import argparse

import numpy as np

from conformal_cal.harness.config import load_config
from conformal_cal.harness.experiments import beam_run


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--alphas", type=float, nargs="+", default=[0.05, 0.1, 0.15, 0.2, 0.3])
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    cfg = load_config(None, "beam")
    cfg.seed = args.seed
    if args.horizon:
        cfg.beam.horizon = args.horizon
    print(f"{'alpha':>6} {'risk_global':>12} {'risk_local':>11} {'size_global':>12} {'size_local':>11}")
    for a in args.alphas:
        rg, sg, _ = beam_run(cfg, 0, a, "global", tag=f"sweep/{a:g}")
        rl, sl, _ = beam_run(cfg, 0, a, "local", tag=f"sweep/{a:g}")
        print(f"{a:>6g} {np.nanmean(rg):>12.4f} {np.nanmean(rl):>11.4f} {sg.mean():>12.3f} {sl.mean():>11.3f}")


if __name__ == "__main__":
    main()
