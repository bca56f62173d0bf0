"""Two-class downlink queueing model for hyperparameter certification.

One hyperparameter vector is ``(fairness_weight, power_level)``. Every slot,
Poisson arrivals join a high- and a low-priority FIFO queue; the slot
capacity ``c0 * log2(1 + power * h)`` (``h`` unit-mean exponential) is split
between the classes, ``fairness_weight`` going to high priority. Latency is
measured with Little's law over the episode: the time-summed backlog seen
after arrivals divided by the number of arrivals, so a packet served in its
arrival slot counts one slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import exp1

from ..errors import ContractViolation


@dataclass
class SchedulerConfig:
    fairness_weight: float = 0.7
    power_level: float = 2.0
    power_grid: tuple = (1.0, 2.0, 4.0, 8.0)
    fairness_grid: tuple = (0.5, 0.6, 0.7, 0.8, 0.9)
    n_high: int = 4
    n_low: int = 4
    rate_high: float = 0.3
    rate_low: float = 0.1
    c0: float = 2.0
    episode_length: int = 100
    l_max: float = 20.0
    arrivals: str = "poisson"  # or "deterministic": exactly `rate` per UE per slot
    fading: str = "exponential"  # or "none": h = 1

    def __post_init__(self):
        self.power_grid = tuple(float(p) for p in self.power_grid)
        self.fairness_grid = tuple(float(f) for f in self.fairness_grid)

    def validate(self) -> list[str]:
        v = []
        if not 0 <= self.fairness_weight <= 1:
            v.append("scheduler.fairness_weight must lie in [0, 1]")
        if not any(math.isclose(self.power_level, p) for p in self.power_grid):
            v.append(f"scheduler.power_level={self.power_level} not in power_grid {self.power_grid}")
        if self.rate_high < 0 or self.rate_low < 0:
            v.append("scheduler arrival rates must be >= 0")
        if self.n_high < 0 or self.n_low < 0:
            v.append("scheduler UE counts must be >= 0")
        if self.c0 <= 0 or self.l_max <= 0 or self.episode_length < 1:
            v.append("scheduler needs c0 > 0, l_max > 0, episode_length >= 1")
        if self.arrivals not in ("poisson", "deterministic"):
            v.append(f"scheduler.arrivals must be poisson|deterministic, got {self.arrivals!r}")
        if self.fading not in ("exponential", "none"):
            v.append(f"scheduler.fading must be exponential|none, got {self.fading!r}")
        return v

    def candidates(self) -> list[tuple[float, float]]:
        """Hyperparameter grid ``(fairness_weight, power_level)``, fairness-major."""
        return [(f, p) for f in self.fairness_grid for p in self.power_grid]

    def with_candidate(self, cand) -> "SchedulerConfig":
        return replace(self, fairness_weight=float(cand[0]), power_level=float(cand[1]))


def mean_capacity(cfg: SchedulerConfig) -> float:
    """``E[c0 log2(1 + p h)]``; for exponential ``h`` this is ``c0 e^{1/p} E1(1/p) / ln 2``."""
    p = cfg.power_level
    if cfg.fading == "none":
        return cfg.c0 * math.log2(1 + p)
    return cfg.c0 * math.exp(1 / p) * float(exp1(1 / p)) / math.log(2)


@dataclass
class EpisodeBatch:
    high_latency: np.ndarray  # slots
    low_latency: np.ndarray  # slots
    loss: np.ndarray  # high-priority latency / l_max, clipped to [0, 1]
    ed_product: np.ndarray  # power_level * low-priority latency
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.loss)


def stability_flags(cfg: SchedulerConfig) -> dict:
    cap = mean_capacity(cfg)
    hi_load = cfg.n_high * cfg.rate_high
    lo_load = cfg.n_low * cfg.rate_low
    return {
        "high_unstable": bool(hi_load > 0 and hi_load >= cfg.fairness_weight * cap),
        "low_unstable": bool(lo_load > 0 and lo_load >= (1 - cfg.fairness_weight) * cap),
    }


def _arrivals(cfg: SchedulerConfig, n_ue: int, rate: float, n_ep: int, rng) -> np.ndarray:
    if n_ue == 0 or rate == 0:
        return np.zeros(n_ep)
    if cfg.arrivals == "deterministic":
        return np.full(n_ep, n_ue * rate)
    # per-UE Poisson streams, summed per class
    return rng.poisson(rate, size=(n_ep, n_ue)).sum(axis=1).astype(float)


def scheduler_batch(cfg: SchedulerConfig, n_episodes: int, rng: np.random.Generator) -> EpisodeBatch:
    """Simulate ``n_episodes`` independent episodes in lockstep."""
    q_hi = np.zeros(n_episodes)
    q_lo = np.zeros(n_episodes)
    area_hi = np.zeros(n_episodes)
    area_lo = np.zeros(n_episodes)
    arr_hi = np.zeros(n_episodes)
    arr_lo = np.zeros(n_episodes)
    w = cfg.fairness_weight
    for _ in range(cfg.episode_length):
        a_hi = _arrivals(cfg, cfg.n_high, cfg.rate_high, n_episodes, rng)
        a_lo = _arrivals(cfg, cfg.n_low, cfg.rate_low, n_episodes, rng)
        q_hi += a_hi
        q_lo += a_lo
        arr_hi += a_hi
        arr_lo += a_lo
        area_hi += q_hi
        area_lo += q_lo
        h = rng.exponential(1.0, n_episodes) if cfg.fading == "exponential" else 1.0
        cap = cfg.c0 * np.log2(1.0 + cfg.power_level * h)
        q_hi -= np.minimum(q_hi, w * cap)
        q_lo -= np.minimum(q_lo, (1 - w) * cap)
    with np.errstate(invalid="ignore", divide="ignore"):
        lat_hi = np.where(arr_hi > 0, area_hi / np.maximum(arr_hi, 1e-300), 0.0)
        lat_lo = np.where(arr_lo > 0, area_lo / np.maximum(arr_lo, 1e-300), 0.0)
    meta = stability_flags(cfg)
    meta["final_backlog_high"] = q_hi
    meta["final_backlog_low"] = q_lo
    return EpisodeBatch(
        high_latency=lat_hi,
        low_latency=lat_lo,
        loss=np.clip(lat_hi / cfg.l_max, 0.0, 1.0),
        ed_product=cfg.power_level * lat_lo,
        metadata=meta,
    )


def scheduler_episode(cfg: SchedulerConfig, seed) -> tuple[float, float, dict]:
    """One episode: ``(normalised high-priority latency, low-priority E-D product, metadata)``."""
    errs = cfg.validate()
    if errs:
        raise ContractViolation("; ".join(errs))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    b = scheduler_batch(cfg, 1, rng)
    meta = {k: (v[0] if isinstance(v, np.ndarray) else v) for k, v in b.metadata.items()}
    meta["high_latency_slots"] = float(b.high_latency[0])
    meta["low_latency_slots"] = float(b.low_latency[0])
    return float(b.loss[0]), float(b.ed_product[0]), meta


class EpisodeStream:
    """Fresh episodes for one candidate, simulated in chunks on demand."""

    def __init__(self, cfg: SchedulerConfig, rng: np.random.Generator, chunk: int = 64):
        self.cfg, self.rng, self.chunk = cfg, rng, chunk
        self.loss = np.empty(0)
        self.ed = np.empty(0)
        self.pos = 0

    def _fill(self):
        b = scheduler_batch(self.cfg, self.chunk, self.rng)
        self.loss = np.concatenate([self.loss, b.loss])
        self.ed = np.concatenate([self.ed, b.ed_product])

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        while len(self.loss) < self.pos + n:
            self._fill()
        sl = slice(self.pos, self.pos + n)
        self.pos += n
        return self.loss[sl], self.ed[sl]

    def rewind(self) -> None:
        """Replay the same episodes from the start (common random numbers)."""
        self.pos = 0

    def next(self) -> float:
        loss, _ = self.take(1)
        return float(loss[0])

    def consumed_ed(self) -> np.ndarray:
        return self.ed[: self.pos]
