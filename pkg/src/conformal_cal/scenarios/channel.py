"""Two-mode Markov-modulated AR(1) channel gain.

Each step first draws the next mode from the transition matrix, then moves
the gain with that mode's recursion ``y' = a y + b + sigma * noise``,
clipped to ``[y_min, y_max]``. A switch into FADE therefore drops the gain
within one step, which is what makes the one-step-ahead law bimodal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation

STABLE, FADE = 0, 1


@dataclass
class ChannelProcess:
    transition: np.ndarray = field(default_factory=lambda: np.array([[0.9, 0.1], [0.3, 0.7]]))
    a: tuple = (0.2, 0.2)
    b: tuple = (0.8, 0.16)
    sigma: tuple = (0.03, 0.03)
    y_min: float = 0.05
    y_max: float = 2.0

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=float)
        if self.transition.shape != (2, 2) or np.any(self.transition < 0):
            raise ContractViolation("transition must be a nonnegative 2x2 matrix")
        if not np.allclose(self.transition.sum(axis=1), 1.0):
            raise ContractViolation("transition rows must sum to 1")
        if not 0 < self.y_min < self.y_max:
            raise ContractViolation("need 0 < y_min < y_max")
        self.a = tuple(float(v) for v in self.a)
        self.b = tuple(float(v) for v in self.b)
        self.sigma = tuple(float(v) for v in self.sigma)

    def stationary(self) -> np.ndarray:
        """Stationary mode distribution of the transition matrix."""
        p_sf, p_fs = self.transition[0, 1], self.transition[1, 0]
        if p_sf + p_fs == 0:
            return np.array([0.5, 0.5])
        return np.array([p_fs, p_sf]) / (p_sf + p_fs)

    def step(self, y, mode, rng: np.random.Generator):
        """Advance arrays of gains and modes by one step (vectorised)."""
        y = np.asarray(y, dtype=float)
        mode = np.asarray(mode, dtype=int)
        u = rng.random(y.shape)
        new_mode = np.where(u < self.transition[mode, 1], FADE, STABLE)
        a = np.asarray(self.a)[new_mode]
        b = np.asarray(self.b)[new_mode]
        s = np.asarray(self.sigma)[new_mode]
        y_new = a * y + b + s * rng.standard_normal(y.shape)
        return np.clip(y_new, self.y_min, self.y_max), new_mode


def channel_sample_trajectory(proc: ChannelProcess, y0: float, length: int, rng: np.random.Generator,
                              mode0: int = STABLE) -> tuple[np.ndarray, np.ndarray]:
    """Gains and modes ``(y_0 .. y_{length-1})`` starting from ``y0`` in ``mode0``."""
    if not proc.y_min <= y0 <= proc.y_max:
        raise ContractViolation(f"y0={y0} outside [{proc.y_min}, {proc.y_max}]")
    gains = np.empty(max(length, 0))
    modes = np.empty(max(length, 0), dtype=int)
    y, m = np.asarray(float(y0)), np.asarray(int(mode0))
    for t in range(length):
        gains[t], modes[t] = y, m
        y, m = proc.step(y, m, rng)
    return gains, modes


def trajectory_sampler(proc: ChannelProcess, y_now, mode_now, m: int, rng: np.random.Generator,
                       horizon: int = 1) -> np.ndarray:
    """``m`` independent rollouts of ``horizon`` future gains from the current state.

    ``y_now``/``mode_now`` may be arrays of length ``n``; the result then has
    shape ``(n, m, horizon)``, otherwise ``(m, horizon)``.
    """
    if m < 1:
        raise ContractViolation("need at least one sampled trajectory")
    y_now = np.asarray(y_now, dtype=float)
    scalar = y_now.ndim == 0
    y = np.repeat(np.atleast_1d(y_now)[:, None], m, axis=1)
    md = np.repeat(np.atleast_1d(np.asarray(mode_now, dtype=int))[:, None], m, axis=1)
    out = np.empty(y.shape + (horizon,))
    for h in range(horizon):
        y, md = proc.step(y, md, rng)
        out[..., h] = y
    return out[0] if scalar else out


def fit_channel_process(gains, modes, y_min: float, y_max: float) -> ChannelProcess:
    """Estimate a :class:`ChannelProcess` from an observed history.

    Transition probabilities come from mode-pair counts (add-one smoothed);
    each mode's ``(a, b, sigma)`` from least squares of ``y_{t+1}`` on ``y_t``
    over the steps that landed in that mode.
    """
    gains = np.asarray(gains, dtype=float)
    modes = np.asarray(modes, dtype=int)
    if len(gains) < 3:
        raise ContractViolation("need a longer history to fit the channel")
    counts = np.ones((2, 2))
    np.add.at(counts, (modes[:-1], modes[1:]), 1)
    trans = counts / counts.sum(axis=1, keepdims=True)
    params = []
    for md in (STABLE, FADE):
        sel = modes[1:] == md
        x, y = gains[:-1][sel], gains[1:][sel]
        if len(x) < 3:
            # mode (almost) never visited: constant predictor at its mean
            params.append((0.0, float(y.mean()) if len(y) else (y_min + y_max) / 2, 0.0))
            continue
        A = np.column_stack([x, np.ones_like(x)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        params.append((float(coef[0]), float(coef[1]), float(resid.std(ddof=2))))
    a, b, s = zip(*params)
    return ChannelProcess(transition=trans, a=a, b=b, sigma=s, y_min=y_min, y_max=y_max)
