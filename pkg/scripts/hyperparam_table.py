#!/usr/bin/env python3
"""Per-latency-target comparison of LTT and adaptive LTT on the scheduler
tuning task: discovery rate, samples, and the true E-D product and latency
of the selected configuration.

    python scripts/hyperparam_table.py [--trials 50] [--seed 0]
"""

import argparse

from conformal_cal.harness.config import load_config
from conformal_cal.harness.experiments import run_hyperparam


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    cfg = load_config(None, "hyperparam")
    cfg.trials, cfg.seed = args.trials, args.seed
    rep = run_hyperparam(cfg)
    agg = rep.aggregates

    def m(key):
        a = agg.get(key)
        return float("nan") if a is None or a["mean"] is None else a["mean"]

    print(f"{'target_ms':>9} {'method':>6} {'P(found)':>9} {'#found':>7} {'E-D':>7} {'latency':>8} {'verified':>9}")
    for t in cfg.hyperparam.alpha_targets_ms:
        for method in ("ltt", "altt"):
            k = f"a{t:g}.{method}"
            trials = [tr[f"{k}_found"] > 0 for tr in rep.trials]
            print(f"{t:>9g} {method:>6} {sum(trials) / len(trials):>9.3f} {m(k + '_found'):>7.2f} "
                  f"{m(k + '_ed'):>7.3f} {m(k + '_latency'):>8.2f} {m(k + '_verified'):>9.3f}")
        print(f"{'':>9} aLTT E-D <= LTT in {m(f'a{t:g}.altt_win'):.3f} of trials")


if __name__ == "__main__":
    main()
