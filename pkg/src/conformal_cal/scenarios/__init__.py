"""Desk-scale wireless simulators that produce normalised KPIs."""

from .backlog import BacklogScenario, backlog_episode, logging_policy
from .beam import BeamEnvironment, BeamSimulator, beam_step
from .channel import ChannelProcess, channel_sample_trajectory, trajectory_sampler
from .power_control import PowerControlConfig, choose_beta_gamma, interference, power_from_set
from .scheduler import SchedulerConfig, scheduler_batch, scheduler_episode

__all__ = [
    "BacklogScenario", "backlog_episode", "logging_policy",
    "BeamEnvironment", "BeamSimulator", "beam_step",
    "ChannelProcess", "channel_sample_trajectory", "trajectory_sampler",
    "PowerControlConfig", "choose_beta_gamma", "interference", "power_from_set",
    "SchedulerConfig", "scheduler_batch", "scheduler_episode",
]
