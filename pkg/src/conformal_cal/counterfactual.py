"""Counterfactual KPI intervals from logged episodes.

Episodes logged under the target action are reweighted by the likelihood
ratio between contexts where the *other* action ran and contexts where the
target action ran. With a known logging policy that ratio is
``(1 - pi(a'|x)) / pi(a'|x)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core_conformal import INCLUDE_ALL, MASS_TOL, Threshold
from .errors import ContractViolation, InsufficientDataError

DEFAULT_CLIP = 50.0

_RESERVED = ("episode_id", "action", "propensity")


@dataclass(frozen=True)
class LoggedEpisode:
    context: np.ndarray
    action: str
    kpi: float
    propensity: float
    episode_id: int = 0

    def __post_init__(self):
        if not 0.0 < self.propensity <= 1.0:
            raise ContractViolation(f"propensity must lie in (0, 1], got {self.propensity}")
        if not math.isfinite(self.kpi):
            raise ContractViolation("kpi must be finite")
        object.__setattr__(self, "context", np.asarray(self.context, dtype=float))


@dataclass(frozen=True)
class WeightedCalibSet:
    nonconformity_scores: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.nonconformity_scores, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if s.size == 0:
            raise InsufficientDataError("weighted calibration set is empty")
        if s.shape != w.shape:
            raise ContractViolation("scores and weights differ in length")
        if not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise ContractViolation("weights must be finite and positive")
        object.__setattr__(self, "nonconformity_scores", s)
        object.__setattr__(self, "weights", w)


def counterfactual_weight(pi_target_action: float, clip: float = DEFAULT_CLIP) -> float:
    """``min((1 - pi) / pi, clip)``; ``clip=inf`` disables clipping."""
    pi = float(pi_target_action)
    if pi <= 0.0:
        raise ContractViolation("target action has zero propensity here; counterfactual is not identifiable")
    if pi > 1.0:
        raise ContractViolation(f"propensity above 1: {pi}")
    if not clip > 0:
        raise ContractViolation("clip must be positive")
    return min((1.0 - pi) / pi, clip)


class WeightedQuantile:
    """Sorted weighted scores, reusable across many test weights."""

    def __init__(self, calib: WeightedCalibSet):
        order = np.argsort(calib.nonconformity_scores, kind="stable")
        self.scores = calib.nonconformity_scores[order]
        self.cum = np.cumsum(calib.weights[order])
        self.total = float(self.cum[-1])

    def threshold(self, test_weight: float, beta: float) -> Threshold:
        if not test_weight >= 0:
            raise ContractViolation("test weight must be nonnegative")
        if not 0.0 < beta < 1.0:
            raise ContractViolation(f"beta must lie in (0, 1), got {beta}")
        need = (1.0 - beta - MASS_TOL) * (self.total + test_weight)
        j = int(np.searchsorted(self.cum, need, side="left"))
        if j >= len(self.cum):
            return INCLUDE_ALL
        return float(self.scores[j])


def weighted_conformal_threshold(calib: WeightedCalibSet, test_weight: float, beta: float) -> Threshold:
    """Smallest score whose cumulative weight, with ``test_weight`` parked at
    ``+inf``, reaches ``1 - beta`` of the total; INCLUDE_ALL if none does."""
    return WeightedQuantile(calib).threshold(test_weight, beta)


def _target_episodes(log: Sequence[LoggedEpisode], action: str) -> list[LoggedEpisode]:
    eps = [e for e in log if e.action == action]
    if not eps:
        raise InsufficientDataError(f"no logged episodes with action {action!r}; counterfactual cannot be evaluated")
    return eps


class CounterfactualCalibrator:
    """Scores and weights for one target action, computed once, queried many times."""

    def __init__(self, target_action: str, log: Sequence[LoggedEpisode], predictor: Callable,
                 clip: float = DEFAULT_CLIP, weighted: bool = True):
        eps = _target_episodes(log, target_action)
        self.target_action = target_action
        self.predictor = predictor
        self.clip = clip
        self.weighted = weighted
        scores = np.array([abs(e.kpi - float(predictor(e.context))) for e in eps])
        if weighted:
            weights = np.array([counterfactual_weight(e.propensity, clip) for e in eps])
        else:
            weights = np.ones(len(eps))
        # a zero weight (pi = 1) carries no information about other contexts
        keep = weights > 0
        if not keep.any():
            raise InsufficientDataError("every calibration episode has zero weight")
        self.quantile = WeightedQuantile(WeightedCalibSet(scores[keep], weights[keep]))

    def interval(self, query_context, query_propensity: Optional[float], beta: float,
                 kpi_range=(-math.inf, math.inf)) -> tuple[float, float]:
        if self.weighted:
            if query_propensity is None:
                raise ContractViolation("weighted interval needs pi(target | query context)")
            test_w = counterfactual_weight(query_propensity, self.clip)
        else:
            test_w = 1.0
        lam = self.quantile.threshold(test_w, beta)
        if lam is INCLUDE_ALL:
            return (float(kpi_range[0]), float(kpi_range[1]))
        pred = float(self.predictor(query_context))
        return (pred - lam, pred + lam)


def counterfactual_interval(target_action, query_context, log, predictor, beta,
                            query_propensity: float, clip: float = DEFAULT_CLIP,
                            kpi_range=(-math.inf, math.inf)) -> tuple[float, float]:
    """Propensity-weighted conformal interval for the KPI ``target_action`` would have produced.

    ``query_propensity`` is ``pi(target_action | query_context)`` under the
    logging policy.
    """
    cal = CounterfactualCalibrator(target_action, log, predictor, clip=clip, weighted=True)
    return cal.interval(query_context, query_propensity, beta, kpi_range)


def naive_interval(target_action, query_context, log, predictor, beta,
                   query_propensity: Optional[float] = None, clip: float = DEFAULT_CLIP,
                   kpi_range=(-math.inf, math.inf)) -> tuple[float, float]:
    """Same pipeline with every weight set to 1 (ignores selection bias)."""
    cal = CounterfactualCalibrator(target_action, log, predictor, clip=clip, weighted=False)
    return cal.interval(query_context, None, beta, kpi_range)


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------


def write_logged_episodes(path, episodes: Sequence[LoggedEpisode], context_names=None,
                          extra_kpis: Optional[dict] = None) -> None:
    """Write a log with columns ``episode_id, <context...>, action, propensity, kpi``.

    ``extra_kpis`` maps column name -> per-episode values for multi-KPI dumps.
    """
    d = len(episodes[0].context) if episodes else 0
    names = list(context_names) if context_names is not None else [f"x{i}" for i in range(d)]
    extra = extra_kpis or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode_id", *names, "action", "propensity", "kpi", *extra])
        for j, e in enumerate(episodes):
            w.writerow([e.episode_id, *(repr(float(v)) for v in e.context), e.action,
                        repr(float(e.propensity)), repr(float(e.kpi)),
                        *(repr(float(extra[k][j])) for k in extra)])


def read_logged_episodes(path, kpi_column: str = "kpi") -> list[LoggedEpisode]:
    """Parse a log; every column that is not reserved and not a KPI is context."""
    out = []
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(row for row in fh if not row.startswith("#")))
    if not rows:
        return out
    ctx_cols = [c for c in rows[0] if c not in _RESERVED and not c.startswith("kpi")]
    for r in rows:
        out.append(LoggedEpisode(
            context=np.array([float(r[c]) for c in ctx_cols]),
            action=r["action"],
            kpi=float(r[kpi_column]),
            propensity=float(r["propensity"]),
            episode_id=int(r["episode_id"]),
        ))
    return out
