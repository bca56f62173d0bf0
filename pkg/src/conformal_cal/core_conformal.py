"""Split conformal prediction over a discretised outcome grid.

Sign convention: models report a *confidence* (higher means more plausible)
and the conformal quantile is taken over *nonconformity* = -confidence.
A prediction set keeps every grid point whose confidence is >= the
confidence threshold, which is the negated nonconformity quantile.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ContractViolation, InsufficientDataError


class _Sentinel(enum.Enum):
    INCLUDE_ALL = "include_all"

    def __repr__(self) -> str:
        return "INCLUDE_ALL"


#: Returned when the conformal rank exceeds the calibration size; the
#: prediction set is then the whole candidate space.
INCLUDE_ALL = _Sentinel.INCLUDE_ALL

Threshold = Union[float, _Sentinel]


# --------------------------------------------------------------------------
# confidence scores
# --------------------------------------------------------------------------


def _as_vec(a) -> np.ndarray:
    v = np.atleast_1d(np.asarray(a, dtype=float))
    if v.ndim != 1:
        raise ContractViolation(f"expected a scalar or 1-d outcome, got shape {v.shape}")
    return v


def score_neg_squared(y, y_hat) -> float:
    """Return ``-||y - y_hat||^2``."""
    y, y_hat = _as_vec(y), _as_vec(y_hat)
    if y.shape != y_hat.shape:
        raise ContractViolation(f"dimension mismatch: {y.shape} vs {y_hat.shape}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_hat))):
        raise ContractViolation("non-finite outcome or prediction")
    d = y - y_hat
    return -float(d @ d)


def score_multi_sample(y, samples) -> float:
    """Return ``-min_m ||y - samples[m]||^2`` over M sampled predictions."""
    y = _as_vec(y)
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise ContractViolation("multi-sample score needs at least one sample")
    s = s.reshape(len(s), -1) if s.ndim > 1 else s.reshape(-1, 1)
    if s.shape[1] != y.shape[0]:
        raise ContractViolation(f"dimension mismatch: outcome {y.shape[0]} vs samples {s.shape[1]}")
    d = s - y
    return -float(np.min(np.einsum("ij,ij->i", d, d)))


@dataclass(frozen=True)
class NegSquared:
    """Unimodal score around a single point prediction."""

    def grid_confidences(self, grid: np.ndarray, samples: np.ndarray) -> np.ndarray:
        # the point prediction is the mean of whatever the model sampled
        s = _samples_2d(samples)
        y_hat = s.mean(axis=0)
        g = _grid_2d(grid)
        d = g - y_hat
        return -np.einsum("ij,ij->i", d, d)


@dataclass(frozen=True)
class MultiSampleNegSquared:
    """Multi-modal score: distance to the nearest of ``m`` sampled predictions."""

    m: int

    def __post_init__(self):
        if int(self.m) < 1:
            raise ContractViolation("MultiSampleNegSquared needs m >= 1")

    def grid_confidences(self, grid: np.ndarray, samples: np.ndarray) -> np.ndarray:
        s = _samples_2d(samples)
        if len(s) != self.m:
            raise ContractViolation(f"expected {self.m} samples, got {len(s)}")
        g = _grid_2d(grid)
        # (G, M) squared distances
        d2 = ((g[:, None, :] - s[None, :, :]) ** 2).sum(axis=2)
        return -d2.min(axis=1)


ConfidenceScoreKind = Union[NegSquared, MultiSampleNegSquared]


def _samples_2d(samples) -> np.ndarray:
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise ContractViolation("empty sample list")
    return s.reshape(-1, 1) if s.ndim <= 1 else s.reshape(len(s), -1)


def _grid_2d(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    return g.reshape(-1, 1) if g.ndim == 1 else g


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationSet:
    nonconformity_scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.nonconformity_scores, dtype=float).ravel()
        if s.size == 0:
            raise InsufficientDataError("calibration set is empty")
        if not np.all(np.isfinite(s)):
            raise ContractViolation("calibration scores must be finite")
        object.__setattr__(self, "nonconformity_scores", s)

    @property
    def n(self) -> int:
        return int(self.nonconformity_scores.size)

    @classmethod
    def from_confidences(cls, confidences: Iterable[float]) -> "CalibrationSet":
        return cls(-np.asarray(list(confidences), dtype=float))


@dataclass(frozen=True)
class CoverageTarget:
    beta: float

    def __post_init__(self):
        if not 0.0 < float(self.beta) < 1.0:
            raise ContractViolation(f"beta must lie in (0, 1), got {self.beta}")


#: Slack on the probability-mass scale that absorbs float fuzz such as
#: ``(n + 1) * 0.9`` landing a hair above an integer. Shared with the
#: weighted quantile so equal weights reproduce this rank exactly.
MASS_TOL = 1e-10


def conformal_rank(n: int, beta: float) -> int:
    """1-based rank ``ceil((n + 1)(1 - beta))`` of the conformal order statistic."""
    return int(math.ceil((n + 1) * (1.0 - beta - MASS_TOL)))


def conformal_threshold(calib, target) -> Threshold:
    """Nonconformity quantile for split conformal prediction.

    ``calib`` may be a :class:`CalibrationSet` or any sequence of scores;
    ``target`` a :class:`CoverageTarget` or a bare ``beta``. Returns
    :data:`INCLUDE_ALL` when ``ceil((n+1)(1-beta)) > n``.
    """
    if not isinstance(calib, CalibrationSet):
        calib = CalibrationSet(np.asarray(calib, dtype=float))
    beta = target.beta if isinstance(target, CoverageTarget) else CoverageTarget(float(target)).beta
    k = conformal_rank(calib.n, beta)
    if k > calib.n:
        return INCLUDE_ALL
    return float(np.partition(calib.nonconformity_scores, k - 1)[k - 1])


def to_confidence_threshold(lam: Threshold) -> float:
    """Map a nonconformity threshold to the confidence scale (INCLUDE_ALL -> -inf)."""
    return -math.inf if lam is INCLUDE_ALL else -float(lam)


# --------------------------------------------------------------------------
# prediction sets
# --------------------------------------------------------------------------


@dataclass
class PredictionSet:
    candidate_grid: np.ndarray
    mask: np.ndarray
    threshold_used: float
    empty: bool = field(init=False)

    def __post_init__(self):
        self.candidate_grid = np.asarray(self.candidate_grid, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if len(self.mask) != len(self.candidate_grid):
            raise ContractViolation("mask and grid lengths differ")
        self.empty = not bool(self.mask.any())

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    @property
    def members(self) -> np.ndarray:
        return self.candidate_grid[self.mask]

    def contains(self, y) -> bool:
        """Whether the grid point nearest to ``y`` is included."""
        return bool(self.mask[snap_to_grid(self.candidate_grid, y)])


def build_prediction_set(candidate_grid, confidences, threshold: Threshold) -> PredictionSet:
    """Keep grid points with confidence >= ``threshold`` (ties included).

    ``threshold`` is on the confidence scale; :data:`INCLUDE_ALL` is treated
    as ``-inf``.
    """
    conf = np.asarray(confidences, dtype=float)
    grid = np.asarray(candidate_grid, dtype=float)
    if len(grid) == 0:
        raise ContractViolation("candidate grid is empty")
    if len(conf) != len(grid):
        raise ContractViolation("one confidence per grid point required")
    t = -math.inf if threshold is INCLUDE_ALL else float(threshold)
    if math.isnan(t):
        raise ContractViolation("threshold is NaN")
    return PredictionSet(grid, conf >= t, t)


def set_to_intervals(pset: PredictionSet) -> list[tuple[float, float]]:
    """Maximal runs of included points of a scalar grid as closed intervals.

    A run of one point yields a zero-width interval ``(y, y)``.
    """
    grid = pset.candidate_grid
    if grid.ndim != 1:
        raise ContractViolation("interval extraction needs a scalar grid")
    if len(grid) > 1 and not np.all(np.diff(grid) > 0):
        raise ContractViolation("grid must be strictly increasing")
    m = pset.mask.astype(np.int8)
    edges = np.diff(np.concatenate(([0], m, [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return [(float(grid[a]), float(grid[b])) for a, b in zip(starts, stops)]


def interval_measure(intervals: Sequence[tuple[float, float]], spacing: float) -> float:
    """Total length, counting each zero-width singleton as one grid spacing."""
    return float(sum((hi - lo) if hi > lo else spacing for lo, hi in intervals))


def snap_to_grid(grid, y) -> int:
    """Index of the nearest grid point; ties go to the lower index."""
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1:
        return int(np.argmin(np.abs(g - float(np.asarray(y, dtype=float).reshape(())))))
    d = g - np.asarray(y, dtype=float)
    return int(np.argmin(np.einsum("ij,ij->i", d, d)))


def coverage_eval(test_pairs: Iterable[tuple[object, PredictionSet]]) -> float:
    """Fraction of ``(truth, set)`` pairs whose snapped truth is in the set."""
    pairs = list(test_pairs)
    if not pairs:
        raise InsufficientDataError("coverage_eval needs at least one pair")
    hits = sum(pset.contains(y) for y, pset in pairs)
    return hits / len(pairs)
