"""Online threshold adaptation with a deterministic long-run risk guarantee.

The global rule is ``lam <- lam - eta * (R_t - alpha)``; the localized rule
applies the same step along a feature vector, ``theta <- theta - eta *
(R_t - alpha) * phi(x)``, so the threshold becomes ``<theta, phi(x)>``.

No clipping is applied. With a constant step the update telescopes:

    sum_t (R_t - alpha) = (lam_1 - lam_{T+1}) / eta

which is exact for any risk sequence, adversarial or not.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation, InsufficientDataError


def _step(eta: float, schedule: str, t: int) -> float:
    if schedule == "constant":
        return eta
    if schedule == "inv_sqrt":
        return eta / math.sqrt(t)
    raise ValueError(f"unknown step schedule {schedule!r}")


def _checked_risk(risk) -> float:
    r = float(risk)
    if not math.isfinite(r):
        raise ContractViolation(f"risk must be finite, got {risk}")
    return r


@dataclass
class OnlineThreshold:
    """Global confidence-scale threshold ``lam_t``.

    ``t`` is the index of the next update (1-based). ``schedule="inv_sqrt"``
    uses ``eta / sqrt(t)``, under which the telescoping identity no longer
    holds exactly.
    """

    lam: float
    eta: float
    alpha: float
    t: int = 1
    schedule: str = "constant"
    record: bool = False
    history: list = field(default_factory=list, compare=False, repr=False)
    audit: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        if not self.eta > 0:
            raise ContractViolation("eta must be positive")

    def threshold(self, x=None) -> float:
        return self.lam

    def update(self, risk, x=None) -> "OnlineThreshold":
        r = _checked_risk(risk)
        if self.record:
            self.history.append((self.t, self.lam, r))
        self.lam = self.lam - _step(self.eta, self.schedule, self.t) * (r - self.alpha)
        self.t += 1
        return self

    def skip(self, reason: str = "missing feedback") -> "OnlineThreshold":
        self.audit.append({"t": self.t, "reason": reason})
        return self

    def snapshot(self) -> dict:
        return {"kind": "global", "lambda": self.lam, "eta": self.eta, "alpha": self.alpha,
                "t": self.t, "schedule": self.schedule}


@dataclass
class LocalizedThreshold:
    """Input-dependent threshold ``<theta, phi(x)>``."""

    theta: np.ndarray
    feature_map: Callable
    eta: float
    alpha: float
    t: int = 1
    schedule: str = "constant"
    audit: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).copy()
        if not self.eta > 0:
            raise ContractViolation("eta must be positive")

    def features(self, x) -> np.ndarray:
        phi = np.asarray(self.feature_map(x), dtype=float)
        if phi.shape != self.theta.shape:
            raise ContractViolation(f"feature dimension {phi.shape} does not match theta {self.theta.shape}")
        if not np.all(np.isfinite(phi)):
            raise ContractViolation("feature map returned non-finite values")
        return phi

    def threshold(self, x) -> float:
        return float(self.theta @ self.features(x))

    def update(self, risk, x) -> "LocalizedThreshold":
        r = _checked_risk(risk)
        phi = self.features(x)
        self.theta = self.theta - _step(self.eta, self.schedule, self.t) * (r - self.alpha) * phi
        self.t += 1
        return self

    def skip(self, reason: str = "missing feedback") -> "LocalizedThreshold":
        self.audit.append({"t": self.t, "reason": reason})
        return self

    def snapshot(self) -> dict:
        snap = {"kind": "localized", "eta": self.eta, "alpha": self.alpha, "t": self.t,
                "schedule": self.schedule, "dim": int(self.theta.size)}
        snap.update({f"theta_{i}": float(v) for i, v in enumerate(self.theta)})
        return snap


# functional forms: the input state is not modified


def ocp_update(state: OnlineThreshold, risk) -> OnlineThreshold:
    new = copy.deepcopy(state)
    return new.update(risk)


def locp_threshold(state: LocalizedThreshold, x) -> float:
    return state.threshold(x)


def locp_update(state: LocalizedThreshold, x, risk) -> LocalizedThreshold:
    new = copy.copy(state)
    new.audit = list(state.audit)
    return new.update(risk, x)


def skip_round(state, reason: str = "missing feedback"):
    """Leave the threshold untouched and log the round with no feedback."""
    return state.skip(reason)


def long_run_risk(trace, alpha: float) -> tuple[float, float]:
    """Return ``(mean risk, mean risk - alpha)`` for a risk trace."""
    r = np.asarray(trace, dtype=float)
    if r.size == 0:
        raise InsufficientDataError("risk trace is empty")
    avg = math.fsum(r.tolist()) / r.size
    return avg, avg - alpha


def telescoping_gap(lam_first: float, lam_last: float, eta: float, horizon: int) -> float:
    """``(lam_1 - lam_{T+1}) / (eta T)``, the exact excess of mean risk over alpha."""
    return (lam_first - lam_last) / (eta * horizon)


# --------------------------------------------------------------------------
# feature maps
# --------------------------------------------------------------------------


class ConstantFeature:
    """``phi(x) = [1]``: the localized rule collapses to the global one."""

    dim = 1

    def __call__(self, x) -> np.ndarray:
        return np.ones(1)


class OneHotBins:
    """One-hot encoding of a scalar position into ``n_bins`` equal bins of [lo, hi)."""

    def __init__(self, n_bins: int, lo: float = 0.0, hi: float = 1.0):
        if n_bins < 1 or not hi > lo:
            raise ContractViolation("need n_bins >= 1 and hi > lo")
        self.n_bins, self.lo, self.hi = int(n_bins), float(lo), float(hi)
        self.dim = self.n_bins

    def index(self, x) -> int:
        u = (float(x) - self.lo) / (self.hi - self.lo)
        return min(max(int(u * self.n_bins), 0), self.n_bins - 1)

    def __call__(self, x) -> np.ndarray:
        phi = np.zeros(self.n_bins)
        phi[self.index(x)] = 1.0
        return phi


class RadialBasis:
    """Normalised Gaussian bumps at ``centers``; entries lie in [0, 1] and sum to 1."""

    def __init__(self, centers, width: float):
        self.centers = np.asarray(centers, dtype=float)
        if not width > 0:
            raise ContractViolation("width must be positive")
        self.width = float(width)
        self.dim = len(self.centers)

    def __call__(self, x) -> np.ndarray:
        z = np.exp(-0.5 * ((float(x) - self.centers) / self.width) ** 2)
        return z / z.sum()


# --------------------------------------------------------------------------
# checkpoint / restore
# --------------------------------------------------------------------------


def save_snapshot(state, path) -> None:
    with open(path, "w") as fh:
        json.dump(state.snapshot(), fh, indent=2, sort_keys=True)


def restore(snapshot: dict, feature_map: Optional[Callable] = None):
    """Rebuild a threshold state from :meth:`snapshot` output."""
    if snapshot["kind"] == "global":
        return OnlineThreshold(lam=float(snapshot["lambda"]), eta=float(snapshot["eta"]),
                               alpha=float(snapshot["alpha"]), t=int(snapshot["t"]),
                               schedule=snapshot.get("schedule", "constant"))
    if feature_map is None:
        raise ContractViolation("restoring a localized threshold needs its feature map")
    theta = [float(snapshot[f"theta_{i}"]) for i in range(int(snapshot["dim"]))]
    return LocalizedThreshold(theta=np.array(theta), feature_map=feature_map, eta=float(snapshot["eta"]),
                              alpha=float(snapshot["alpha"]), t=int(snapshot["t"]),
                              schedule=snapshot.get("schedule", "constant"))


def load_snapshot(path, feature_map: Optional[Callable] = None):
    with open(path) as fh:
        return restore(json.load(fh), feature_map)
