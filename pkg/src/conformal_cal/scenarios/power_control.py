"""Unlicensed power control under an average interference budget.

The transmitter predicts the next gain ``y`` towards the licensed receiver,
builds a conformal set for it, and picks the largest power whose worst-case
interference over the set stays below ``gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core_conformal import (
    MultiSampleNegSquared,
    NegSquared,
    PredictionSet,
    build_prediction_set,
    conformal_threshold,
    snap_to_grid,
    to_confidence_threshold,
)
from ..errors import ContractViolation
from .channel import STABLE, ChannelProcess, channel_sample_trajectory, fit_channel_process, trajectory_sampler


@dataclass
class PowerControlConfig:
    alpha: float = 0.3
    beta: float = 0.05
    x_max: float = 1.0
    horizon: int = 500
    calib_length: int = 500
    train_length: int = 2000
    n_samples: int = 20
    grid_points: int = 400
    p_stable_to_fade: float = 0.1
    p_fade_to_stable: float = 0.3
    a_stable: float = 0.2
    b_stable: float = 0.8
    sigma_stable: float = 0.03
    a_fade: float = 0.2
    b_fade: float = 0.16
    sigma_fade: float = 0.03
    y_min: float = 0.05
    y_max: float = 2.0

    def channel(self) -> ChannelProcess:
        return ChannelProcess(
            transition=np.array([[1 - self.p_stable_to_fade, self.p_stable_to_fade],
                                 [self.p_fade_to_stable, 1 - self.p_fade_to_stable]]),
            a=(self.a_stable, self.a_fade),
            b=(self.b_stable, self.b_fade),
            sigma=(self.sigma_stable, self.sigma_fade),
            y_min=self.y_min,
            y_max=self.y_max,
        )

    @property
    def gamma(self) -> float:
        return choose_beta_gamma(self.alpha, self.beta, self.x_max, self.y_max)

    def validate(self) -> list[str]:
        v = []
        if not 0 < self.alpha:
            v.append("power_control.alpha must be positive")
        if not 0 < self.beta < 1:
            v.append("power_control.beta must lie in (0, 1)")
        elif self.alpha > 0 and self.beta >= self.alpha / (self.x_max * self.y_max):
            v.append(f"power_control.beta={self.beta} too large for budget: need beta < alpha/(x_max*y_max)"
                     f" = {self.alpha / (self.x_max * self.y_max):.4g}")
        if self.x_max <= 0:
            v.append("power_control.x_max must be positive")
        if not 0 < self.y_min < self.y_max:
            v.append("power_control needs 0 < y_min < y_max")
        if self.horizon < 0 or self.calib_length < 1 or self.train_length < 3:
            v.append("power_control needs horizon >= 0, calib_length >= 1, train_length >= 3")
        if self.n_samples < 1:
            v.append("power_control.n_samples must be >= 1")
        if self.grid_points < 2:
            v.append("power_control.grid_points must be >= 2")
        for name in ("p_stable_to_fade", "p_fade_to_stable"):
            if not 0 <= getattr(self, name) <= 1:
                v.append(f"power_control.{name} must lie in [0, 1]")
        return v


def choose_beta_gamma(alpha: float, beta: float, x_max: float, y_max: float) -> float:
    """Per-step interference cap ``gamma = (alpha - beta x_max y_max) / (1 - beta)``.

    Covered steps contribute at most ``gamma`` and uncovered ones at most
    ``x_max y_max``, so the mean interference is at most ``alpha``.
    """
    if not beta < alpha / (x_max * y_max):
        raise ContractViolation("beta too large for budget: need beta < alpha / (x_max * y_max)")
    return (alpha - beta * x_max * y_max) / (1.0 - beta)


def power_from_set(gamma: float, gain_set: PredictionSet, y_max: float, x_max: float) -> float:
    """Largest power with ``x * y <= gamma`` for every gain in the set, capped at ``x_max``."""
    if not gamma > 0:
        raise ContractViolation("gamma must be positive")
    worst = y_max if gain_set.empty else float(gain_set.members.max())
    return min(x_max, gamma / worst)


def interference(x, y):
    return np.asarray(x) * np.asarray(y) if np.ndim(x) or np.ndim(y) else float(x) * float(y)


@dataclass
class PowerControlRun:
    true_gain: np.ndarray
    power: dict
    set_size: dict
    covered: dict
    interference: dict
    thresholds: dict


SCORES = ("unimodal", "multisample")


def run_power_control_trial(cfg: PowerControlConfig, rng_channel: np.random.Generator,
                            rng_predictor: np.random.Generator) -> PowerControlRun:
    """Train a channel model, calibrate both scores, then deploy for ``cfg.horizon`` steps."""
    proc = cfg.channel()
    y0 = float(np.clip(cfg.b_stable / (1 - cfg.a_stable), cfg.y_min, cfg.y_max))
    total = cfg.train_length + cfg.calib_length + cfg.horizon + 1
    gains, modes = channel_sample_trajectory(proc, y0, total, rng_channel, STABLE)
    model = fit_channel_process(gains[:cfg.train_length], modes[:cfg.train_length], cfg.y_min, cfg.y_max)

    grid = np.linspace(cfg.y_min, cfg.y_max, cfg.grid_points)
    spacing = float(grid[1] - grid[0])
    snapped = grid[np.abs(gains[:, None] - grid[None, :]).argmin(axis=1)]
    kinds = {"unimodal": NegSquared(), "multisample": MultiSampleNegSquared(cfg.n_samples)}

    # calibration: predict y_{t+1} from the state at t
    c0 = cfg.train_length
    cal_t = np.arange(c0, c0 + cfg.calib_length)
    samples = trajectory_sampler(model, gains[cal_t], modes[cal_t], cfg.n_samples, rng_predictor)[..., 0]
    truth = snapped[cal_t + 1]
    nonconf = {
        "unimodal": (truth - samples.mean(axis=1)) ** 2,
        "multisample": ((truth[:, None] - samples) ** 2).min(axis=1),
    }
    lam = {k: conformal_threshold(nonconf[k], cfg.beta) for k in SCORES}
    conf_thr = {k: to_confidence_threshold(lam[k]) for k in SCORES}

    gamma = cfg.gamma
    d0 = c0 + cfg.calib_length
    dep_t = np.arange(d0, d0 + cfg.horizon)
    if cfg.horizon:
        dep_samples = trajectory_sampler(model, gains[dep_t], modes[dep_t], cfg.n_samples, rng_predictor)[..., 0]
    y_true = gains[dep_t + 1]
    power = {k: np.empty(cfg.horizon) for k in SCORES}
    size = {k: np.empty(cfg.horizon) for k in SCORES}
    covered = {k: np.empty(cfg.horizon, dtype=bool) for k in SCORES}
    for j in range(cfg.horizon):
        idx_true = snap_to_grid(grid, y_true[j])
        for k in SCORES:
            conf = kinds[k].grid_confidences(grid, dep_samples[j])
            pset = build_prediction_set(grid, conf, conf_thr[k])
            power[k][j] = power_from_set(gamma, pset, cfg.y_max, cfg.x_max)
            size[k][j] = pset.size * spacing
            covered[k][j] = pset.mask[idx_true]
    return PowerControlRun(
        true_gain=y_true,
        power=power,
        set_size=size,
        covered=covered,
        interference={k: interference(power[k], y_true) for k in SCORES},
        thresholds=lam,
    )
