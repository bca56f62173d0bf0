"""One runner per experiment.

Each runner splits work into independent trials. A trial is a pure function
of ``(config, trial index)`` that returns a flat dict of scalar metrics plus
its rows of the trace table, so trials can run in worker processes and be
reassembled in index order.
"""

from __future__ import annotations

import dataclasses
import math
import operator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .. import __version__
from ..counterfactual import CounterfactualCalibrator, LoggedEpisode
from ..errors import ConfigError
from ..online_calibration import LocalizedThreshold, OneHotBins, OnlineThreshold
from ..risk_control import CandidateGrid, RiskRequirement, altt_run, ltt_run, select_best
from ..scenarios.backlog import _episode_randomness, fluid_prediction, logging_policy, propensity, run_schedule, sample_context
from ..scenarios.beam import BeamSimulator
from ..scenarios.power_control import SCORES, run_power_control_trial
from ..scenarios.scheduler import EpisodeStream, scheduler_batch
from .config import ExperimentConfig, validate_config
from .rng import stream


OPS = {"<": operator.lt, "<=": operator.le, ">=": operator.ge, ">": operator.gt}


@dataclass
class Target:
    name: str
    value: Optional[float]
    op: str  # one of OPS
    bound: float

    @property
    def passed(self) -> Optional[bool]:
        if self.value is None or not math.isfinite(self.value):
            return None  # not evaluable (e.g. zero horizon)
        return bool(OPS[self.op](self.value, self.bound))


@dataclass
class RunReport:
    experiment: str
    trials: list  # per-trial metric dicts, index order
    trace_header: list
    trace_rows: list
    aggregates: dict
    targets: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(t.passed is not False for t in self.targets)


def aggregate(trials: list[dict]) -> dict:
    """Mean, Monte-Carlo standard error, count and sum of every metric (NaNs skipped)."""
    keys = sorted({k for t in trials for k in t})
    out = {}
    for k in keys:
        vals = [float(t[k]) for t in trials if k in t and math.isfinite(float(t[k]))]
        n = len(vals)
        if n == 0:
            out[k] = {"mean": None, "se": None, "n": 0, "sum": 0.0}
            continue
        mean = math.fsum(vals) / n
        se = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1) / n) if n > 1 else None
        out[k] = {"mean": mean, "se": se, "n": n, "sum": math.fsum(vals)}
    return out


def _mean(agg, key):
    return agg.get(key, {}).get("mean")


def _run_trials(fn: Callable, cfg: ExperimentConfig, shared) -> list:
    args = range(cfg.trials)
    if cfg.workers <= 1 or cfg.trials == 1:
        return [fn(cfg, t, shared) for t in args]
    with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
        return list(ex.map(fn, [cfg] * cfg.trials, args, [shared] * cfg.trials))


def _finish(cfg, name, results, header, targets_fn) -> RunReport:
    trials = [m for m, _ in results]
    rows = [r for _, rs in results for r in rs]
    agg = aggregate(trials)
    return RunReport(
        experiment=name,
        trials=trials,
        trace_header=header,
        trace_rows=rows,
        aggregates=agg,
        targets=targets_fn(agg),
        provenance={
            "config_hash": cfg.digest(),
            "seed": cfg.seed,
            "trials": cfg.trials,
            "version": __version__,
            "numpy": np.__version__,
        },
    )


def _check(cfg: ExperimentConfig, name: str):
    if cfg.experiment != name:
        raise ConfigError([f"config is for {cfg.experiment!r}, runner is {name!r}"])
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(problems)


# --------------------------------------------------------------------------
# power control
# --------------------------------------------------------------------------

POWER_HEADER = ["trial", "t", "true_gain"] + [f"power_{k}" for k in SCORES] + \
    [f"set_size_{k}" for k in SCORES] + [f"covered_{k}" for k in SCORES]


def _power_trial(cfg: ExperimentConfig, trial: int, shared):
    pc = cfg.power_control
    run = run_power_control_trial(pc, stream(cfg.seed, trial, "channel"), stream(cfg.seed, trial, "predictor"))
    metrics = {}
    for k in SCORES:
        # plotted powers are normalised by x_max
        p = run.power[k] / pc.x_max
        metrics[f"coverage_{k}"] = float(run.covered[k].mean()) if pc.horizon else math.nan
        metrics[f"power_{k}"] = float(p.mean()) if pc.horizon else math.nan
        metrics[f"interference_{k}"] = float(run.interference[k].mean()) if pc.horizon else math.nan
        metrics[f"set_size_{k}"] = float(run.set_size[k].mean()) if pc.horizon else math.nan
    rows = []
    for j in range(pc.horizon):
        rows.append([trial, j, float(run.true_gain[j])]
                    + [float(run.power[k][j] / pc.x_max) for k in SCORES]
                    + [float(run.set_size[k][j]) for k in SCORES]
                    + [int(run.covered[k][j]) for k in SCORES])
    return metrics, rows


def _power_targets(cfg):
    alpha = cfg.power_control.alpha

    def targets(agg):
        cu, cm = _mean(agg, "coverage_unimodal"), _mean(agg, "coverage_multisample")
        pu, pm = _mean(agg, "power_unimodal"), _mean(agg, "power_multisample")
        out = [
            Target("coverage_gap", None if cu is None else abs(cu - cm), "<=", 0.01),
            Target("power_ratio_multisample_over_unimodal", None if not pu else pm / pu, ">=", 1.1),
        ]
        for k in SCORES:
            a = agg.get(f"interference_{k}", {})
            se = a.get("se") or 0.0
            out.append(Target(f"interference_{k}", a.get("mean"), "<=", alpha + 2 * se))
        return out

    return targets


def run_power_control(cfg: ExperimentConfig) -> RunReport:
    _check(cfg, "power_control")
    res = _run_trials(_power_trial, cfg, None)
    return _finish(cfg, "power_control", res, POWER_HEADER, _power_targets(cfg))


# --------------------------------------------------------------------------
# hyperparameter certification
# --------------------------------------------------------------------------

HYPER_HEADER = ["trial", "alpha_target_ms", "method", "selected_fairness", "selected_power",
                "ed_product", "discoveries", "samples_used", "heldout_latency_ms"]


def heldout_truth(cfg: ExperimentConfig):
    """Per-candidate (mean high-priority latency, mean E-D product) on a large held-out batch."""
    sch, hp = cfg.scheduler, cfg.hyperparam
    lat, ed = [], []
    for i, c in enumerate(sch.candidates()):
        b = scheduler_batch(sch.with_candidate(c), hp.heldout_episodes, stream(cfg.seed, 0, f"heldout/{i}"))
        lat.append(float(np.mean(b.high_latency)))
        ed.append(float(np.mean(b.ed_product)))
    return np.array(lat), np.array(ed)


def _tag(t: float) -> str:
    return f"a{t:g}"


def _hyper_trial(cfg: ExperimentConfig, trial: int, shared):
    true_lat, true_ed = shared
    sch, hp = cfg.scheduler, cfg.hyperparam
    cands = sch.candidates()
    grid = CandidateGrid(cands)
    k = len(cands)
    streams = [EpisodeStream(sch.with_candidate(c), stream(cfg.seed, trial, f"episodes/{i}"))
               for i, c in enumerate(cands)]

    def source(i):
        return streams[i].next()

    metrics, rows = {}, []
    for tgt in hp.alpha_targets_ms:
        req = RiskRequirement(tgt / sch.l_max, hp.beta)
        picked = {}
        for method in ("ltt", "altt"):
            for s in streams:
                s.rewind()
            if method == "ltt":
                out = ltt_run(source, grid, req, hp.budget // k, hp.ltt_procedure)
            else:
                out = altt_run(source, grid, req, hp.budget)
            # the method only knows the E-D products it observed while testing
            est = [float(np.mean(s.consumed_ed())) if s.pos else math.inf for s in streams]
            best = select_best(out, est)
            picked[method] = best
            tag = f"{_tag(tgt)}.{method}"
            metrics[f"{tag}_found"] = len(out.discovered)
            metrics[f"{tag}_samples"] = int(out.samples_used.sum())
            metrics[f"{tag}_ed"] = math.nan if best is None else float(true_ed[best])
            metrics[f"{tag}_latency"] = math.nan if best is None else float(true_lat[best])
            metrics[f"{tag}_verified"] = math.nan if best is None else float(true_lat[best] <= tgt)
            rows.append([trial, tgt, method,
                         "" if best is None else cands[best][0],
                         "" if best is None else cands[best][1],
                         "" if best is None else float(true_ed[best]),
                         len(out.discovered), int(out.samples_used.sum()),
                         "" if best is None else float(true_lat[best])])
        ed = {m: math.inf if b is None else float(true_ed[b]) for m, b in picked.items()}
        metrics[f"{_tag(tgt)}.altt_win"] = float(ed["altt"] <= ed["ltt"])
        metrics[f"{_tag(tgt)}.only_altt"] = float(picked["ltt"] is None and picked["altt"] is not None)
    return metrics, rows


def _hyper_targets(cfg):
    hp = cfg.hyperparam

    def targets(agg):
        out = [Target(f"altt_win_rate@{hp.compare_target_ms:g}ms",
                      _mean(agg, f"{_tag(hp.compare_target_ms)}.altt_win"), ">=", 0.8)]
        only = [_mean(agg, f"{_tag(t)}.only_altt") or 0.0 for t in hp.alpha_targets_ms]
        out.append(Target("max_fraction_ltt_empty_altt_found", max(only) if only else None, ">=", 0.5))
        return out

    return targets


def run_hyperparam(cfg: ExperimentConfig) -> RunReport:
    _check(cfg, "hyperparam")
    hp = cfg.hyperparam
    if hp.compare_target_ms not in hp.alpha_targets_ms:
        cfg = _with_compare(cfg)
    shared = heldout_truth(cfg)
    res = _run_trials(_hyper_trial, cfg, shared)
    return _finish(cfg, "hyperparam", res, HYPER_HEADER, _hyper_targets(cfg))


def _with_compare(cfg):
    hp = cfg.hyperparam
    targets = tuple(sorted(set(hp.alpha_targets_ms) | {hp.compare_target_ms}))
    return dataclasses.replace(cfg, hyperparam=dataclasses.replace(hp, alpha_targets_ms=targets))


# --------------------------------------------------------------------------
# beam selection
# --------------------------------------------------------------------------

BEAM_HEADER = ["trial", "t", "cumulative_risk_global", "cumulative_risk_local", "set_size_global", "set_size_local"]


def beam_run(cfg: ExperimentConfig, trial: int, alpha: float, method: str, tag: str = "main"):
    """Risks (NaN without feedback), set sizes and final state for one calibration method."""
    bc, env = cfg.beam, cfg.beam_env
    sim = BeamSimulator(env, stream(cfg.seed, trial, "beam/trajectory"))
    fb = stream(cfg.seed, trial, f"beam/feedback/{tag}")
    if method == "global":
        state = OnlineThreshold(lam=bc.init_threshold, eta=bc.eta, alpha=alpha)
    else:
        state = LocalizedThreshold(theta=np.full(bc.loc_bins, bc.init_threshold),
                                   feature_map=OneHotBins(bc.loc_bins), eta=bc.eta, alpha=alpha)
    risk = np.full(bc.horizon, np.nan)
    size = np.empty(bc.horizon, dtype=int)
    for t in range(bc.horizon):
        got = bc.feedback_prob >= 1.0 or fb.random() < bc.feedback_prob
        x = sim.context()
        mask, r, _ = sim.step(state.threshold(x), feedback=got)
        size[t] = int(mask.sum())
        if got:
            risk[t] = r
            state.update(r, x)
        else:
            state.skip()
    return risk, size, state


def _cumulative_mean(risk):
    seen = ~np.isnan(risk)
    num = np.cumsum(np.where(seen, risk, 0.0))
    den = np.cumsum(seen)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.maximum(den, 1), np.nan)


def _beam_trial(cfg: ExperimentConfig, trial: int, shared):
    bc = cfg.beam
    rg, sg, st_g = beam_run(cfg, trial, bc.alpha, "global")
    rl, sl, _ = beam_run(cfg, trial, bc.alpha, "local")
    cg, cl = _cumulative_mean(rg), _cumulative_mean(rl)
    obs = ~np.isnan(rg)
    metrics = {
        "risk_global": float(np.nanmean(rg)),
        "risk_local": float(np.nanmean(rl)),
        "set_size_global": float(sg.mean()),
        "set_size_local": float(sl.mean()),
        # sum of (R - alpha) against the threshold drift, constant step size
        "telescoping_gap_global": abs(math.fsum(rg[obs] - bc.alpha) - (bc.init_threshold - st_g.lam) / bc.eta),
    }
    for a in bc.alpha_sweep:
        for method in ("global", "local"):
            r, s, _ = beam_run(cfg, trial, a, method, tag=f"sweep/{a:g}")
            metrics[f"sweep.a{a:g}.set_size_{method}"] = float(s.mean())
            metrics[f"sweep.a{a:g}.risk_{method}"] = float(np.nanmean(r))
    rows = [[trial, t, float(cg[t]), float(cl[t]), int(sg[t]), int(sl[t])] for t in range(bc.horizon)]
    return metrics, rows


def _beam_targets(cfg):
    a = cfg.beam.alpha

    def targets(agg):
        out = [Target(f"risk_{m}_deviation", None if _mean(agg, f"risk_{m}") is None
                      else abs(_mean(agg, f"risk_{m}") - a), "<=", 0.01) for m in ("global", "local")]
        g, loc = _mean(agg, "set_size_global"), _mean(agg, "set_size_local")
        out.append(Target("set_size_local_minus_global", None if g is None else loc - g, "<", 0.0))
        return out

    return targets


def run_beam(cfg: ExperimentConfig) -> RunReport:
    _check(cfg, "beam")
    res = _run_trials(_beam_trial, cfg, None)
    return _finish(cfg, "beam", res, BEAM_HEADER, _beam_targets(cfg))


# --------------------------------------------------------------------------
# counterfactual backlog intervals
# --------------------------------------------------------------------------

CF_HEADER = ["trial", "context", "ue", "propensity_target", "truth", "naive_lo", "naive_hi", "cf_lo", "cf_hi"]


def _draw_episodes(scn, n, rng):
    """Contexts, logged actions with their propensities, and each episode's randomness."""
    out = []
    for _ in range(n):
        x = sample_context(scn, rng)
        a, p = logging_policy(scn, x, rng)
        arrivals, fade = _episode_randomness(scn, rng)
        out.append((x, a, p, arrivals, fade))
    return out


def _cf_trial(cfg: ExperimentConfig, trial: int, shared):
    cc, scn = cfg.counterfactual, cfg.backlog
    target = cc.target_action
    log = _draw_episodes(scn, cc.n_log, stream(cfg.seed, trial, "cf/log"))
    test = [e for e in _draw_episodes(scn, cc.n_test, stream(cfg.seed, trial, "cf/test")) if e[1] != target]
    observed = [run_schedule(scn, x, a, arr, fade) for x, a, _, arr, fade in log]
    cals = []
    for u in range(scn.n_ue):
        eps = [LoggedEpisode(x, a, float(q[u]), p, i) for i, ((x, a, p, _, _), q) in enumerate(zip(log, observed))]

        def pred(x, u=u):
            return fluid_prediction(scn, x, target)[u]

        cals.append((CounterfactualCalibrator(target, eps, pred, clip=cc.clip, weighted=True),
                     CounterfactualCalibrator(target, eps, pred, clip=cc.clip, weighted=False)))
    rows = []
    cov_w = cov_n = pairs = 0
    width_w = width_n = 0.0
    kpi_range = (0.0, math.inf)  # backlogs are nonnegative
    for j, (x, _, _, arr, fade) in enumerate(test):
        truth = run_schedule(scn, x, target, arr, fade)
        pi = propensity(scn, x, target)
        for u, (cw, cn) in enumerate(cals):
            wl, wh = cw.interval(x, pi, cc.beta, kpi_range)
            nl, nh = cn.interval(x, None, cc.beta, kpi_range)
            y = float(truth[u])
            cov_w += wl <= y <= wh
            cov_n += nl <= y <= nh
            width_w += wh - wl
            width_n += nh - nl
            pairs += 1
            rows.append([trial, j, u, pi, y, nl, nh, wl, wh])
    metrics = {
        "heldout_contexts": len(test),
        "pairs": pairs,
        "covered_weighted": cov_w,
        "covered_naive": cov_n,
        "coverage_weighted": cov_w / pairs if pairs else math.nan,
        "coverage_naive": cov_n / pairs if pairs else math.nan,
        "width_weighted": width_w / pairs if pairs else math.nan,
        "width_naive": width_n / pairs if pairs else math.nan,
        "log_target_episodes": sum(a == target for _, a, *_ in log),
    }
    return metrics, rows


def pooled(agg, num, den):
    d = agg.get(den, {}).get("sum", 0.0)
    return agg[num]["sum"] / d if d else None


def _cf_targets(cfg):
    beta = cfg.counterfactual.beta

    def targets(agg):
        return [
            Target("coverage_weighted", pooled(agg, "covered_weighted", "pairs"), ">=", 1 - beta - 0.015),
            Target("coverage_naive", pooled(agg, "covered_naive", "pairs"), "<=", 1 - beta - 0.02),
        ]

    return targets


def run_counterfactual(cfg: ExperimentConfig) -> RunReport:
    _check(cfg, "counterfactual")
    res = _run_trials(_cf_trial, cfg, None)
    return _finish(cfg, "counterfactual", res, CF_HEADER, _cf_targets(cfg))


RUNNERS = {
    "power_control": run_power_control,
    "hyperparam": run_hyperparam,
    "beam": run_beam,
    "counterfactual": run_counterfactual,
}
