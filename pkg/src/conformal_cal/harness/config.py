"""Experiment configuration: INI files mapped onto dataclasses.

A config file has a ``[run]`` section plus one section per component the
experiment uses, e.g.::

    [run]
    experiment = beam
    seed = 0
    trials = 1

    [beam]
    alpha = 0.1

    [beam_env]
    n_beams = 16

Values are parsed according to the dataclass field types; tuples are
comma-separated.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from ..errors import ConfigError
from ..scenarios.backlog import ACTIONS, BacklogScenario
from ..scenarios.beam import BeamEnvironment
from ..scenarios.power_control import PowerControlConfig
from ..scenarios.scheduler import SchedulerConfig

EXPERIMENTS = ("power_control", "hyperparam", "beam", "counterfactual")


@dataclass
class HyperparamConfig:
    alpha_targets_ms: tuple = (2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0)
    beta: float = 0.1
    budget: int = 1000
    compare_target_ms: float = 6.0
    ltt_procedure: str = "bonferroni"
    heldout_episodes: int = 4000

    def validate(self) -> list[str]:
        v = []
        if not 0 < self.beta < 1:
            v.append("hyperparam.beta must lie in (0, 1)")
        if self.budget < 0:
            v.append("hyperparam.budget must be >= 0")
        if not self.alpha_targets_ms:
            v.append("hyperparam.alpha_targets_ms is empty")
        if self.ltt_procedure not in ("bonferroni", "fixed_sequence"):
            v.append("hyperparam.ltt_procedure must be bonferroni|fixed_sequence")
        if self.heldout_episodes < 1:
            v.append("hyperparam.heldout_episodes must be >= 1")
        return v


@dataclass
class BeamConfig:
    alpha: float = 0.1
    eta: float = 0.1
    horizon: int = 10000
    loc_bins: int = 8
    init_threshold: float = 1.0
    feedback_prob: float = 1.0
    alpha_sweep: tuple = (0.05, 0.1, 0.15, 0.2, 0.3)

    def validate(self) -> list[str]:
        v = []
        if not 0 <= self.alpha < 1:
            v.append("beam.alpha must lie in [0, 1)")
        if not self.eta > 0:
            v.append("beam.eta must be positive")
        if self.horizon < 1 or self.loc_bins < 1:
            v.append("beam needs horizon >= 1 and loc_bins >= 1")
        if not 0 < self.feedback_prob <= 1:
            v.append("beam.feedback_prob must lie in (0, 1]")
        if any(not 0 <= a < 1 for a in self.alpha_sweep):
            v.append("beam.alpha_sweep entries must lie in [0, 1)")
        return v


@dataclass
class CounterfactualConfig:
    beta: float = 0.1
    clip: float = 50.0
    n_log: int = 2000
    n_test: int = 700
    target_action: str = "RR"

    def validate(self) -> list[str]:
        v = []
        if not 0 < self.beta < 1:
            v.append("counterfactual.beta must lie in (0, 1)")
        if not self.clip > 0:
            v.append("counterfactual.clip must be positive")
        if self.n_log < 0 or self.n_test < 0:
            v.append("counterfactual.n_log and n_test must be >= 0")
        if self.target_action not in ACTIONS:
            v.append(f"counterfactual.target_action must be one of {ACTIONS}")
        return v


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    trials: int = 1
    workers: int = 1
    out_dir: Optional[str] = None
    power_control: PowerControlConfig = field(default_factory=PowerControlConfig)
    hyperparam: HyperparamConfig = field(default_factory=HyperparamConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    beam: BeamConfig = field(default_factory=BeamConfig)
    beam_env: BeamEnvironment = field(default_factory=BeamEnvironment)
    counterfactual: CounterfactualConfig = field(default_factory=CounterfactualConfig)
    backlog: BacklogScenario = field(default_factory=BacklogScenario)

    def sections(self) -> tuple[str, ...]:
        return {
            "power_control": ("power_control",),
            "hyperparam": ("hyperparam", "scheduler"),
            "beam": ("beam", "beam_env"),
            "counterfactual": ("counterfactual", "backlog"),
        }.get(self.experiment, ())

    def to_dict(self) -> dict:
        d = {"experiment": self.experiment, "seed": self.seed, "trials": self.trials}
        for s in self.sections():
            d[s] = dataclasses.asdict(getattr(self, s))
        return d

    def digest(self) -> str:
        """Hash of everything that affects results (not workers or output dir)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SECTION_TYPES = {
    "power_control": PowerControlConfig,
    "hyperparam": HyperparamConfig,
    "scheduler": SchedulerConfig,
    "beam": BeamConfig,
    "beam_env": BeamEnvironment,
    "counterfactual": CounterfactualConfig,
    "backlog": BacklogScenario,
}


def _parse(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(p) for p in raw.split(",") if p.strip())
        return raw
    except ValueError as exc:
        raise ConfigError([f"{where}: cannot parse {raw!r} ({exc})"]) from None


def _apply(obj, section: configparser.SectionProxy, name: str, problems: list):
    fields = {f.name for f in dataclasses.fields(obj)}
    updates = {}
    for key, raw in section.items():
        if key not in fields:
            problems.append(f"[{name}] unknown key {key!r}")
            continue
        try:
            updates[key] = _parse(raw, getattr(obj, key), f"[{name}] {key}")
        except ConfigError as exc:
            problems.extend(exc.violations)
    return dataclasses.replace(obj, **updates)


def load_config(path=None, experiment: Optional[str] = None) -> ExperimentConfig:
    """Read an INI config; with no path the packaged default for ``experiment`` is used."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is None:
        if experiment is None:
            raise ConfigError(["need a config path or an experiment name"])
        text = resources.files("conformal_cal.configs").joinpath(f"{experiment}.ini").read_text()
        parser.read_string(text)
    else:
        p = Path(path)
        if not p.exists():
            raise ConfigError([f"config file not found: {p}"])
        parser.read(p)
    problems: list[str] = []
    run = parser["run"] if parser.has_section("run") else {}
    exp = run.get("experiment", experiment)
    if experiment is not None and exp != experiment:
        problems.append(f"config is for experiment {exp!r}, not {experiment!r}")
    if exp is None:
        raise ConfigError(problems + ["run.experiment is missing (or pass --experiment)"])
    if exp not in EXPERIMENTS:
        raise ConfigError(problems + [f"unknown experiment {exp!r}"])
    cfg = ExperimentConfig(experiment=exp)
    for key in ("seed", "trials", "workers"):
        if key in run:
            try:
                setattr(cfg, key, int(run[key]))
            except ValueError:
                problems.append(f"[run] {key} must be an integer")
    for name in parser.sections():
        if name == "run":
            continue
        if name not in _SECTION_TYPES:
            problems.append(f"unknown section [{name}]")
            continue
        setattr(cfg, name, _apply(getattr(cfg, name), parser[name], name, problems))
    if problems:
        raise ConfigError(problems)
    return cfg


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """Every violation of the owning modules' preconditions, all at once."""
    v = []
    if cfg.experiment not in EXPERIMENTS:
        return [f"unknown experiment {cfg.experiment!r}"]
    if not 0 <= cfg.seed < 2**64:
        v.append("seed must be an unsigned 64-bit integer")
    if cfg.trials < 1:
        v.append("trials must be >= 1")
    if cfg.workers < 1:
        v.append("workers must be >= 1")
    for s in cfg.sections():
        v.extend(getattr(cfg, s).validate())
    if cfg.experiment == "hyperparam":
        hp, sch = cfg.hyperparam, cfg.scheduler
        if any(not 0 < a < sch.l_max for a in hp.alpha_targets_ms):
            v.append(f"hyperparam.alpha_targets_ms must lie in (0, l_max={sch.l_max})")
        if not 0 < hp.compare_target_ms < sch.l_max:
            v.append("hyperparam.compare_target_ms must lie in (0, l_max)")
    return v
