"""Certifying hyperparameters against a risk requirement with FWER control.

Two families of tests are provided:

* batch learn-then-test: Hoeffding-Bentkus p-values combined with either a
  Bonferroni or a fixed-sequence procedure;
* adaptive learn-then-test: one betting e-process per candidate, sampled
  sequentially, with a Bonferroni-corrected Ville threshold so that stopping
  at any time keeps the family-wise error rate below ``beta``.

All losses must already be normalised to [0, 1].
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ContractViolation, LossSourceError

BET_EPS = 1e-12


@dataclass(frozen=True)
class RiskRequirement:
    alpha: float
    beta: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ContractViolation(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.beta < 1.0:
            raise ContractViolation(f"beta must lie in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class CandidateGrid:
    candidates: tuple
    order: Optional[tuple] = None

    def __post_init__(self):
        cands = tuple(tuple(np.atleast_1d(np.asarray(c, dtype=float)).tolist()) for c in self.candidates)
        if not cands:
            raise ContractViolation("candidate grid is empty")
        if len(set(cands)) != len(cands):
            raise ContractViolation("duplicate candidates in grid")
        if not all(math.isfinite(v) for c in cands for v in c):
            raise ContractViolation("candidates must be finite")
        object.__setattr__(self, "candidates", cands)
        if self.order is not None:
            order = tuple(int(i) for i in self.order)
            if sorted(order) != list(range(len(cands))):
                raise ContractViolation("order must be a permutation of candidate indices")
            object.__setattr__(self, "order", order)

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass
class TestOutcome:
    discovered: tuple
    evidence: np.ndarray
    samples_used: np.ndarray
    # round (1-based, global) at which each discovery happened; aLTT only
    discovery_round: dict = field(default_factory=dict)
    dropped: tuple = ()

    __test__ = False  # not a pytest class


def normalize_loss(value, lo: float, hi: float):
    """Affine map of a KPI onto [0, 1] using declared bounds, clipped."""
    if not hi > lo:
        raise ContractViolation("normalisation needs hi > lo")
    return np.clip((np.asarray(value, dtype=float) - lo) / (hi - lo), 0.0, 1.0)


# --------------------------------------------------------------------------
# batch LTT
# --------------------------------------------------------------------------


def bernoulli_kl(a: float, b: float) -> float:
    """KL(Bern(a) || Bern(b)) with the 0 log 0 = 0 convention."""
    out = 0.0
    if a > 0:
        out += a * math.log(a / b)
    if a < 1:
        out += (1 - a) * math.log((1 - a) / (1 - b))
    return out


def hb_pvalue(n: int, r_hat: float, alpha: float) -> float:
    """Hoeffding-Bentkus p-value for the null ``E[loss] > alpha``.

    ``p = min(1, exp(-n KL(min(r_hat, alpha) || alpha)), e * P(Bin(n, alpha) <= ceil(n r_hat)))``.
    """
    if n < 1:
        raise ContractViolation("hb_pvalue needs n >= 1")
    if not 0.0 <= r_hat <= 1.0:
        raise ContractViolation(f"r_hat must lie in [0, 1], got {r_hat}")
    if not 0.0 < alpha < 1.0:
        raise ContractViolation(f"alpha must lie in (0, 1), got {alpha}")
    p_h = math.exp(-n * bernoulli_kl(min(r_hat, alpha), alpha))
    # n * r_hat is a count when losses are binary; absorb float fuzz before ceil
    k = math.ceil(n * r_hat - 1e-9)
    p_b = math.e * float(stats.binom.cdf(k, n, alpha))
    return min(1.0, p_h, p_b)


def _outcome_from_mask(mask, pvalues, samples_used) -> TestOutcome:
    return TestOutcome(
        discovered=tuple(int(i) for i in np.flatnonzero(mask)),
        evidence=np.asarray(pvalues, dtype=float),
        samples_used=np.asarray(samples_used, dtype=int),
    )


def bonferroni_ltt(pvalues: Sequence[float], beta: float, samples_used=None) -> TestOutcome:
    """Discover every candidate with ``p <= beta / |grid|``."""
    p = np.asarray(pvalues, dtype=float)
    if samples_used is None:
        samples_used = np.zeros(len(p), dtype=int)
    return _outcome_from_mask(p <= beta / len(p), p, samples_used)


def fixed_sequence_ltt(ordered_pvalues: Sequence[float], beta: float, order=None, samples_used=None) -> TestOutcome:
    """Reject along a data-independent ordering until the first ``p > beta``.

    ``ordered_pvalues[j]`` is the p-value of candidate ``order[j]`` (identity
    ordering by default); discoveries are reported as candidate indices.
    """
    p = np.asarray(ordered_pvalues, dtype=float)
    order = np.arange(len(p)) if order is None else np.asarray(order, dtype=int)
    mask = np.zeros(len(p), dtype=bool)
    for j, idx in enumerate(order):
        if p[j] > beta:
            break
        mask[idx] = True
    evidence = np.empty(len(p))
    evidence[order] = p
    if samples_used is None:
        samples_used = np.zeros(len(p), dtype=int)
    return _outcome_from_mask(mask, evidence, samples_used)


def ltt_run(
    loss_source: Callable[[int], float],
    grid: CandidateGrid,
    req: RiskRequirement,
    n_per_candidate: int,
    procedure: str = "bonferroni",
) -> TestOutcome:
    """Batch LTT: draw ``n_per_candidate`` losses for every candidate, then test."""
    k = len(grid)
    if n_per_candidate <= 0:
        return TestOutcome((), np.ones(k), np.zeros(k, dtype=int))
    means = np.empty(k)
    for i in range(k):
        losses = [_checked_loss(loss_source(i)) for _ in range(n_per_candidate)]
        means[i] = math.fsum(losses) / n_per_candidate
    pvals = np.array([hb_pvalue(n_per_candidate, float(m), req.alpha) for m in means])
    used = np.full(k, n_per_candidate, dtype=int)
    if procedure == "bonferroni":
        return bonferroni_ltt(pvals, req.beta, used)
    if procedure == "fixed_sequence":
        order = grid.order if grid.order is not None else tuple(range(k))
        return fixed_sequence_ltt(pvals[list(order)], req.beta, order, used)
    raise ValueError(f"unknown procedure {procedure!r}")


# --------------------------------------------------------------------------
# e-processes and adaptive LTT
# --------------------------------------------------------------------------


def max_bet(alpha: float) -> float:
    return 0.5 / (1.0 - alpha)


@dataclass
class EProcess:
    """Betting wealth against the null ``E[loss] > alpha``.

    Each round multiplies wealth by ``1 + bet * (alpha - loss)``; the bet is
    predictable (set from past rounds only), so wealth is a nonnegative
    supermartingale under the null.
    """

    alpha: float
    wealth: float = 1.0
    bet: float = 0.0
    count: int = 0
    sum_g: float = 0.0
    sum_g2: float = 0.0

    def observe(self, loss: float) -> "EProcess":
        loss = _checked_loss(loss)
        g = self.alpha - loss
        self.wealth *= 1.0 + self.bet * g
        self.count += 1
        self.sum_g += g
        self.sum_g2 += g * g
        self.bet = betting_update(self)
        return self


def betting_update(state: EProcess) -> float:
    """aGRAPA-style bet ``clip(sum_g / sum_g2, 0, 0.5 / (1 - alpha))``."""
    raw = state.sum_g / max(state.sum_g2, BET_EPS)
    return min(max(raw, 0.0), max_bet(state.alpha))


def eprocess_update(state: EProcess, loss: float, alpha: float) -> EProcess:
    """Functional form of :meth:`EProcess.observe`; ``state`` is left untouched."""
    if alpha != state.alpha:
        state = replace(state, alpha=alpha)
    else:
        state = replace(state)
    return state.observe(loss)


def _checked_loss(loss) -> float:
    loss = float(loss)
    if not 0.0 <= loss <= 1.0:
        raise ContractViolation(f"loss must lie in [0, 1], got {loss}")
    return loss


class LargestWealthFirst:
    """Sample the unresolved candidate with the most wealth.

    Ties are broken round-robin, starting just after the last pick.
    """

    def __init__(self):
        self.last = -1

    def __call__(self, wealth: np.ndarray, active: np.ndarray) -> int:
        idx = np.flatnonzero(active)
        w = wealth[idx]
        tied = idx[w == w.max()]
        after = tied[tied > self.last]
        pick = int(after[0] if len(after) else tied[0])
        self.last = pick
        return pick


class RoundRobin:
    def __init__(self):
        self.last = -1

    def __call__(self, wealth: np.ndarray, active: np.ndarray) -> int:
        idx = np.flatnonzero(active)
        after = idx[idx > self.last]
        pick = int(after[0] if len(after) else idx[0])
        self.last = pick
        return pick


def altt_run(
    loss_source: Callable[[int], float],
    grid: CandidateGrid,
    req: RiskRequirement,
    budget: int,
    arm_policy=None,
    max_discoveries: Optional[int] = None,
    drop_floor: Optional[float] = None,
) -> TestOutcome:
    """Adaptive LTT with one e-process per candidate.

    ``loss_source(i)`` returns one loss in [0, 1] for candidate ``i``. A
    candidate is discovered as soon as its wealth reaches ``|grid| / beta``
    and stops being sampled once its wealth falls below ``drop_floor``
    (default ``beta / (10 |grid|)``).
    """
    k = len(grid)
    policy = arm_policy if arm_policy is not None else LargestWealthFirst()
    floor = req.beta / (10 * k) if drop_floor is None else drop_floor
    target = k / req.beta
    procs = [EProcess(req.alpha) for _ in range(k)]
    wealth = np.ones(k)
    active = np.ones(k, dtype=bool)
    used = np.zeros(k, dtype=int)
    found: dict[int, int] = {}
    dropped: list[int] = []

    def outcome() -> TestOutcome:
        return TestOutcome(
            discovered=tuple(sorted(found)),
            evidence=wealth.copy(),
            samples_used=used.copy(),
            discovery_round=dict(found),
            dropped=tuple(sorted(dropped)),
        )

    for rnd in range(1, max(int(budget), 0) + 1):
        if not active.any():
            break
        if max_discoveries is not None and len(found) >= max_discoveries:
            break
        i = policy(wealth, active)
        try:
            loss = loss_source(i)
        except Exception as exc:
            raise LossSourceError(f"loss source failed for candidate {i} at round {rnd}", outcome()) from exc
        procs[i].observe(loss)
        used[i] += 1
        wealth[i] = procs[i].wealth
        if wealth[i] >= target:
            found[i] = rnd
            active[i] = False
        elif wealth[i] < floor:
            dropped.append(i)
            active[i] = False
    return outcome()


def select_best(outcome: TestOutcome, secondary_kpi) -> Optional[int]:
    """Discovered candidate with the smallest secondary KPI (lowest index on ties)."""
    if not outcome.discovered:
        return None
    kpi = np.asarray(secondary_kpi, dtype=float)
    best = min(outcome.discovered, key=lambda i: (kpi[i], i))
    return int(best)


# --------------------------------------------------------------------------
# offline replay from CSV
# --------------------------------------------------------------------------


def write_loss_log(path, records) -> None:
    """Write ``(round, candidate_index, loss)`` triples."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "candidate_index", "loss"])
        for rnd, cand, loss in records:
            w.writerow([int(rnd), int(cand), repr(float(loss))])


class ReplayLossSource:
    """Replays a logged loss stream; each candidate's losses are served in round order.

    Asking for more losses than were logged for a candidate raises
    :class:`IndexError`, which ``altt_run`` surfaces as a
    :class:`LossSourceError` carrying the partial outcome.
    """

    def __init__(self, per_candidate: dict):
        self._queues = {int(k): deque(v) for k, v in per_candidate.items()}

    @classmethod
    def from_csv(cls, path) -> "ReplayLossSource":
        rows = defaultdict(list)
        with open(Path(path), newline="") as fh:
            for row in csv.DictReader(fh):
                rows[int(row["candidate_index"])].append((int(row["round"]), float(row["loss"])))
        return cls({k: [loss for _, loss in sorted(v)] for k, v in rows.items()})

    def remaining(self, i: int) -> int:
        return len(self._queues.get(i, ()))

    def __call__(self, i: int) -> float:
        q = self._queues.get(i)
        if not q:
            raise IndexError(f"no logged losses left for candidate {i}")
        return q.popleft()
