"""Round-robin vs proportional-fair downlink backlog drain.

A context is the initial state: per-UE backlogs followed by per-UE mean
channel rates. An episode draws Poisson arrivals and Rayleigh-faded
instantaneous rates for ``horizon`` slots and serves one backlogged UE per
slot. All randomness comes from the episode seed and is drawn before any
scheduling decision, so both schedulers replayed with the same seed see the
same arrivals and channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation

RR, PFCA = "RR", "PFCA"
ACTIONS = (RR, PFCA)


@dataclass
class BacklogScenario:
    n_ue: int = 4
    horizon: int = 40
    backlog_max: float = 30.0  # initial backlogs ~ U(0, backlog_max)
    rate_lo: float = 0.5  # mean channel rates ~ U(rate_lo, rate_hi)
    rate_hi: float = 2.0
    arrival_rate: float = 0.2  # packets per UE per slot
    fading: str = "rayleigh"  # or "none"
    pf_decay: float = 0.99
    policy_tau: float = 8.0
    policy_temperature: float = 2.0

    def validate(self) -> list[str]:
        v = []
        if self.n_ue < 1 or self.horizon < 0:
            v.append("counterfactual scenario needs n_ue >= 1 and horizon >= 0")
        if self.backlog_max < 0 or self.arrival_rate < 0:
            v.append("backlogs and arrival rates must be >= 0")
        if not 0 < self.rate_lo <= self.rate_hi:
            v.append("need 0 < rate_lo <= rate_hi")
        if self.fading not in ("rayleigh", "none"):
            v.append(f"fading must be rayleigh|none, got {self.fading!r}")
        if not 0 < self.pf_decay < 1:
            v.append("pf_decay must lie in (0, 1)")
        if not self.policy_temperature > 0:
            v.append("policy_temperature must be positive")
        return v

    def split(self, context):
        x = np.asarray(context, dtype=float)
        return x[: self.n_ue], x[self.n_ue:]


def sample_context(scn: BacklogScenario, rng: np.random.Generator) -> np.ndarray:
    b0 = rng.uniform(0.0, scn.backlog_max, scn.n_ue)
    rates = rng.uniform(scn.rate_lo, scn.rate_hi, scn.n_ue)
    return np.concatenate([b0, rates])


def _episode_randomness(scn: BacklogScenario, rng: np.random.Generator):
    arrivals = rng.poisson(scn.arrival_rate, (scn.horizon, scn.n_ue)).astype(float)
    if scn.fading == "rayleigh":
        fade = rng.exponential(1.0, (scn.horizon, scn.n_ue))
    else:
        fade = np.ones((scn.horizon, scn.n_ue))
    return arrivals, fade


def run_schedule(scn: BacklogScenario, context, action: str, arrivals, fade) -> np.ndarray:
    """Final per-UE backlogs for one scheduler on pre-drawn randomness."""
    if action not in ACTIONS:
        raise ContractViolation(f"unknown action {action!r}")
    b0, mean_rate = scn.split(context)
    q = b0.astype(float).copy()
    thr = mean_rate.astype(float).copy()  # PF throughput average
    last = -1
    n = scn.n_ue
    for t in range(scn.horizon):
        q += arrivals[t]
        inst = mean_rate * fade[t]
        busy = q > 0
        if busy.any():
            if action == RR:
                # next backlogged UE after the last one served
                order = [(last + 1 + k) % n for k in range(n)]
                u = next(i for i in order if busy[i])
            else:
                metric = np.where(busy, inst / thr, -np.inf)
                u = int(np.argmax(metric))
            q[u] = max(0.0, q[u] - inst[u])
            last = u
            served = np.zeros(n)
            served[u] = inst[u]
        else:
            served = np.zeros(n)
        thr = scn.pf_decay * thr + (1 - scn.pf_decay) * served
    return q


def backlog_episode(scn: BacklogScenario, action: str, seed, context=None) -> np.ndarray:
    """Final per-UE backlogs; the context is drawn from ``seed`` unless given."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if context is None:
        context = sample_context(scn, rng)
    arrivals, fade = _episode_randomness(scn, rng)
    return run_schedule(scn, context, action, arrivals, fade)


def fluid_prediction(scn: BacklogScenario, context, action: str) -> np.ndarray:
    """Deterministic fluid estimate of the final backlogs.

    Each UE gets ``horizon / n_ue`` slots; under PFCA the rate it is served
    at is boosted by the expected maximum of ``n_ue`` unit exponentials
    (multi-user diversity), which is the harmonic number ``H_{n_ue}``.
    """
    b0, mean_rate = scn.split(context)
    slots = scn.horizon / scn.n_ue
    gain = 1.0
    if action == PFCA and scn.fading == "rayleigh":
        gain = sum(1.0 / k for k in range(1, scn.n_ue + 1))
    return np.maximum(0.0, b0 + scn.arrival_rate * scn.horizon - slots * mean_rate * gain)


def rr_score(scn: BacklogScenario, context) -> float:
    """Predicted worst residual backlog if RR were used."""
    return float(fluid_prediction(scn, context, RR).max())


def rr_propensity(scn: BacklogScenario, context) -> float:
    """``pi(RR | x) = sigmoid(-(s(x) - tau) / temperature)``."""
    z = (rr_score(scn, context) - scn.policy_tau) / scn.policy_temperature
    return 1.0 / (1.0 + math.exp(z)) if z < 700 else 0.0


def propensity(scn: BacklogScenario, context, action: str) -> float:
    p = rr_propensity(scn, context)
    return p if action == RR else 1.0 - p


def logging_policy(scn: BacklogScenario, context, rng: np.random.Generator) -> tuple[str, float]:
    """Sample an action and return it with the exact probability it had."""
    p_rr = rr_propensity(scn, context)
    if rng.random() < p_rr:
        return RR, p_rr
    return PFCA, 1.0 - p_rr
