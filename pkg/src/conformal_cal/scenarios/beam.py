"""Candidate beam-set selection for downlink training.

A UE random-walks along a one-dimensional route in [0, 1]; position maps to
a line-of-sight angle, and each codebook beam sees a Gaussian main-lobe gain
around that angle with log-normal fading whose spread depends on where the
UE is (clean line of sight on part of the route, heavy scattering on the
rest). The predictor keeps, for each location bin, an exponential moving
average of the per-beam SNRs reported by full-codebook training and scores
each beam by its average relative to the best average in that bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation


@dataclass
class BeamEnvironment:
    n_beams: int = 16
    angle_span: float = 120.0  # degrees, codebook covers [-span/2, span/2]
    lobe_width: float = 12.0  # std of the Gaussian main lobe, degrees
    snr_peak: float = 100.0
    snr_floor: float = 0.05
    los_fading_db: float = 0.5
    nlos_fading_db: float = 8.0
    nlos_start: float = 0.5  # route positions >= this are scattering-rich
    step_std: float = 0.15
    predictor_bins: int = 40
    ema_decay: float = 0.9

    def validate(self) -> list[str]:
        v = []
        if self.n_beams < 2:
            v.append("beam.n_beams must be >= 2")
        if self.snr_floor <= 0 or self.snr_peak <= 0:
            v.append("beam SNR levels must be positive")
        if self.lobe_width <= 0 or self.angle_span <= 0:
            v.append("beam.lobe_width and beam.angle_span must be positive")
        if not 0 < self.ema_decay < 1:
            v.append("beam.ema_decay must lie in (0, 1)")
        if self.predictor_bins < 1 or self.step_std < 0:
            v.append("beam needs predictor_bins >= 1 and step_std >= 0")
        return v

    @property
    def beam_angles(self) -> np.ndarray:
        h = self.angle_span / 2
        return np.linspace(-h, h, self.n_beams)

    def direction(self, pos: float) -> float:
        # keep the UE inside the codebook's coverage
        h = self.angle_span / 2 - self.angle_span / (2 * (self.n_beams - 1))
        return -h + 2 * h * pos

    def fading_db(self, pos: float) -> float:
        return self.nlos_fading_db if pos >= self.nlos_start else self.los_fading_db

    def snr(self, pos: float, rng: np.random.Generator) -> np.ndarray:
        """Per-beam SNR (linear) at ``pos``; always >= ``snr_floor``."""
        d = self.beam_angles - self.direction(pos)
        mean = self.snr_peak * np.exp(-0.5 * (d / self.lobe_width) ** 2)
        fade = 10 ** (self.fading_db(pos) * rng.standard_normal(self.n_beams) / 10)
        return mean * fade + self.snr_floor

    def move(self, pos: float, rng: np.random.Generator) -> float:
        p = pos + self.step_std * rng.standard_normal()
        # reflect at the route ends
        p = abs(p)
        if p > 1:
            p = 2 - p
        return min(max(p, 0.0), 1.0 - 1e-12)


class EMABeamPredictor:
    """Per-location-bin EMA of observed per-beam SNRs."""

    def __init__(self, env: BeamEnvironment):
        self.env = env
        self.avg = np.zeros((env.predictor_bins, env.n_beams))
        self.seen = np.zeros(env.predictor_bins, dtype=bool)

    def bin(self, pos: float) -> int:
        return min(int(pos * self.env.predictor_bins), self.env.predictor_bins - 1)

    def confidence(self, pos: float) -> np.ndarray:
        """Relative predicted SNR in (0, 1]; all ones for a bin never visited."""
        b = self.bin(pos)
        if not self.seen[b]:
            return np.ones(self.env.n_beams)
        a = self.avg[b]
        return a / a.max()

    def observe(self, pos: float, snr: np.ndarray) -> None:
        b = self.bin(pos)
        if not self.seen[b]:
            self.avg[b] = snr
            self.seen[b] = True
        else:
            d = self.env.ema_decay
            self.avg[b] = d * self.avg[b] + (1 - d) * snr


def snr_degradation(snr: np.ndarray, mask: np.ndarray) -> float:
    """``(best - best_in_set) / best`` clipped to [0, 1]; 1 for an empty set."""
    if not mask.any():
        return 1.0
    best = float(snr.max())
    if best <= 0:
        raise ContractViolation("SNRs must be positive")
    return float(np.clip((best - float(snr[mask].max())) / best, 0.0, 1.0))


class BeamSimulator:
    """Owns the UE position and the predictor; one :meth:`step` per time slot."""

    def __init__(self, env: BeamEnvironment, rng: np.random.Generator, start: float = 0.25):
        self.env = env
        self.rng = rng
        self.pos = float(start)
        self.predictor = EMABeamPredictor(env)

    def context(self) -> float:
        return self.pos

    def step(self, threshold: float, feedback: bool = True):
        """Run one slot with a confidence threshold for the current context.

        Returns ``(mask, risk, context)``; ``risk`` is ``None`` when no
        full-codebook feedback arrives this slot.
        """
        x = self.pos
        conf = self.predictor.confidence(x)
        mask = conf >= threshold
        snr = self.env.snr(x, self.rng)
        risk = None
        if feedback:
            risk = snr_degradation(snr, mask)
            self.predictor.observe(x, snr)
        self.pos = self.env.move(self.pos, self.rng)
        return mask, risk, x


def beam_step(env: BeamEnvironment, sim: BeamSimulator, threshold_fn, rng=None):
    """One slot: ``(candidate mask, R_t, context)`` with ``threshold_fn(context)`` as threshold."""
    if rng is not None:
        sim.rng = rng
    return sim.step(threshold_fn(sim.context()))
