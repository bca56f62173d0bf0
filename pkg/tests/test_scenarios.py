import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_cal.core_conformal import PredictionSet
from conformal_cal.errors import ContractViolation
from conformal_cal.scenarios import (
    BacklogScenario,
    BeamEnvironment,
    BeamSimulator,
    ChannelProcess,
    PowerControlConfig,
    SchedulerConfig,
    backlog_episode,
    beam_step,
    channel_sample_trajectory,
    choose_beta_gamma,
    interference,
    logging_policy,
    power_from_set,
    scheduler_batch,
    scheduler_episode,
    trajectory_sampler,
)
from conformal_cal.scenarios.backlog import PFCA, RR, propensity, run_schedule
from conformal_cal.scenarios.beam import snr_degradation
from conformal_cal.scenarios.channel import FADE, STABLE, fit_channel_process
from conformal_cal.scenarios.power_control import run_power_control_trial
from conformal_cal.scenarios.scheduler import EpisodeStream, mean_capacity


class TestChannel:
    def test_fixed_point(self):
        proc = ChannelProcess(transition=np.eye(2), a=(0.9, 0.9), b=(0.1, 0.1), sigma=(0, 0))
        g, m = channel_sample_trajectory(proc, 1.0, 10, np.random.default_rng(0))
        np.testing.assert_allclose(g, np.ones(10), rtol=0, atol=1e-15)
        assert np.all(m == STABLE)

    def test_seeded(self):
        proc = ChannelProcess()
        a = channel_sample_trajectory(proc, 1.0, 200, np.random.default_rng(5))
        b = channel_sample_trajectory(proc, 1.0, 200, np.random.default_rng(5))
        assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()

    def test_no_fade_is_unimodal(self):
        proc = ChannelProcess(transition=[[1.0, 0.0], [1.0, 0.0]])
        _, m = channel_sample_trajectory(proc, 1.0, 500, np.random.default_rng(1))
        assert np.all(m == STABLE)

    def test_empty_and_bounds(self):
        g, m = channel_sample_trajectory(ChannelProcess(), 1.0, 0, np.random.default_rng(0))
        assert g.size == 0 and m.size == 0
        with pytest.raises(ContractViolation):
            channel_sample_trajectory(ChannelProcess(), 5.0, 3, np.random.default_rng(0))
        g, _ = channel_sample_trajectory(ChannelProcess(sigma=(2.0, 2.0)), 1.0, 500, np.random.default_rng(0))
        assert g.min() >= 0.05 and g.max() <= 2.0

    def test_bad_transition(self):
        with pytest.raises(ContractViolation):
            ChannelProcess(transition=[[0.5, 0.4], [0.3, 0.7]])

    def test_stationary_occupancy(self):
        proc = ChannelProcess()
        rng = np.random.default_rng(2)
        n = 20_000
        y, m = np.full(n, 1.0), np.zeros(n, dtype=int)
        for _ in range(60):
            y, m = proc.step(y, m, rng)
        pi_fade = proc.stationary()[FADE]
        assert pi_fade == pytest.approx(0.25)
        assert abs(np.mean(m == FADE) - pi_fade) <= 3 * math.sqrt(pi_fade * (1 - pi_fade) / n)

    def test_sampler(self):
        frozen = ChannelProcess(transition=np.eye(2), sigma=(0, 0))
        s = trajectory_sampler(frozen, 1.0, STABLE, 7, np.random.default_rng(0), horizon=3)
        assert s.shape == (7, 3) and np.all(s == s[0])
        a = trajectory_sampler(ChannelProcess(), [1.0, 0.3], [STABLE, FADE], 5, np.random.default_rng(4))
        b = trajectory_sampler(ChannelProcess(), [1.0, 0.3], [STABLE, FADE], 5, np.random.default_rng(4))
        assert a.shape == (2, 5, 1) and a.tobytes() == b.tobytes()

    def test_fit_recovers_parameters(self):
        proc = ChannelProcess()
        g, m = channel_sample_trajectory(proc, 1.0, 20_000, np.random.default_rng(3))
        fit = fit_channel_process(g, m, proc.y_min, proc.y_max)
        np.testing.assert_allclose(fit.transition, proc.transition, atol=0.02)
        np.testing.assert_allclose(fit.b, proc.b, atol=0.02)


class TestPowerControl:
    def test_gamma(self):
        assert choose_beta_gamma(0.1, 0.05, 1.0, 1.0) == pytest.approx(0.05 / 0.95)
        assert choose_beta_gamma(0.1, 1e-12, 1.0, 1.0) == pytest.approx(0.1)
        with pytest.raises(ContractViolation):
            choose_beta_gamma(0.1, 0.1, 1.0, 1.0)

    def test_power_from_set(self):
        grid = np.array([0.5, 1.0, 2.0, 4.0])
        s = PredictionSet(grid, [1, 1, 1, 0], 0.0)
        assert power_from_set(1.0, s, 4.0, 10.0) == 0.5
        assert power_from_set(1.0, PredictionSet(grid, [0, 0, 0, 0], 0.0), 4.0, 10.0) == 0.25
        smaller = PredictionSet(grid, [1, 1, 0, 0], 0.0)
        assert power_from_set(1.0, smaller, 4.0, 10.0) >= power_from_set(1.0, s, 4.0, 10.0)

    def test_interference(self):
        assert interference(0.0, 3.0) == 0.0
        assert interference(0.5, 2.0) == 1.0

    @given(st.lists(st.booleans(), min_size=4, max_size=4).filter(any), st.floats(0.01, 1.0))
    def test_covered_steps_respect_gamma(self, mask, gamma):
        grid = np.array([0.2, 0.7, 1.1, 1.9])
        s = PredictionSet(grid, mask, 0.0)
        x = power_from_set(gamma, s, 2.0, 1.0)
        assert all(interference(x, y) <= gamma + 1e-12 for y in s.members)

    def test_validate_reports_beta_budget(self):
        bad = PowerControlConfig(alpha=0.1, beta=0.2, x_max=1.0, y_max=2.0)
        assert any("beta" in v for v in bad.validate())
        assert PowerControlConfig().validate() == []

    def test_trial_runs_and_zero_horizon(self):
        cfg = PowerControlConfig(horizon=30, calib_length=100, train_length=300)
        r1 = run_power_control_trial(cfg, np.random.default_rng(1), np.random.default_rng(2))
        r2 = run_power_control_trial(cfg, np.random.default_rng(1), np.random.default_rng(2))
        assert r1.power["multisample"].tobytes() == r2.power["multisample"].tobytes()
        assert np.all(r1.power["unimodal"] <= cfg.x_max)
        z = run_power_control_trial(PowerControlConfig(horizon=0, calib_length=50, train_length=100),
                                    np.random.default_rng(1), np.random.default_rng(2))
        assert z.true_gain.size == 0


class TestScheduler:
    def test_zero_arrivals(self):
        cfg = SchedulerConfig(rate_high=0.0, rate_low=0.0)
        loss, ed, _ = scheduler_episode(cfg, 0)
        assert loss == 0.0 and ed == 0.0

    def test_hand_queue_walk(self):
        cfg = SchedulerConfig(n_high=1, rate_high=1.0, n_low=0, arrivals="deterministic", fading="none",
                              fairness_weight=1.0, power_level=1.0, c0=2.0)
        assert mean_capacity(cfg) == 2.0
        _, _, meta = scheduler_episode(cfg, 0)
        assert meta["high_latency_slots"] == 1.0

    def test_starvation_flagged(self):
        _, _, meta = scheduler_episode(SchedulerConfig(fairness_weight=1.0), 3)
        assert meta["low_unstable"] and not meta["high_unstable"]

    def test_seeded(self):
        a = scheduler_episode(SchedulerConfig(), 11)
        b = scheduler_episode(SchedulerConfig(), 11)
        assert a[:2] == b[:2]

    def test_validation(self):
        assert SchedulerConfig(power_level=3.0).validate()
        with pytest.raises(ContractViolation):
            scheduler_episode(SchedulerConfig(arrivals="bursty"), 0)

    def test_capacity_closed_form(self):
        cfg = SchedulerConfig(power_level=4.0)
        rng = np.random.default_rng(0)
        h = rng.exponential(1.0, 400_000)
        mc = np.mean(cfg.c0 * np.log2(1 + cfg.power_level * h))
        assert mean_capacity(cfg) == pytest.approx(mc, rel=5e-3)

    def test_stream_rewind(self):
        s = EpisodeStream(SchedulerConfig(), np.random.default_rng(0), chunk=8)
        first = [s.next() for _ in range(20)]
        s.rewind()
        assert [s.next() for _ in range(20)] == first
        assert len(s.consumed_ed()) == 20

    def test_batch_losses_normalised(self):
        b = scheduler_batch(SchedulerConfig(power_level=1.0, fairness_weight=0.5), 50, np.random.default_rng(0))
        assert np.all((b.loss >= 0) & (b.loss <= 1)) and len(b) == 50


class TestBeam:
    def test_degradation_examples(self):
        snr = np.array([10.0, 9.0, 1.0])
        assert snr_degradation(snr, np.array([True, False, False])) == 0.0
        assert snr_degradation(snr, np.array([False, True, True])) == pytest.approx(0.1)
        assert snr_degradation(snr, np.zeros(3, bool)) == 1.0

    @given(st.lists(st.floats(0.01, 100), min_size=2, max_size=16), st.data())
    def test_risk_non_increasing_in_set(self, snr, data):
        snr = np.array(snr)
        order = data.draw(st.permutations(range(len(snr))))
        mask = np.zeros(len(snr), bool)
        prev = 1.0
        for i in order:
            mask[i] = True
            r = snr_degradation(snr, mask)
            assert 0.0 <= r <= prev
            prev = r

    def test_step_monotone_in_threshold(self):
        env = BeamEnvironment()
        for seed in range(5):
            # same state, two thresholds: the lower one has a superset and no more risk
            risks = []
            for thr in (0.9, 0.5):
                sim = BeamSimulator(env, np.random.default_rng(seed))
                for _ in range(50):
                    sim.step(1.0)
                mask, r, _ = beam_step(env, sim, lambda x: thr)
                risks.append((mask, r))
            (m_hi, r_hi), (m_lo, r_lo) = risks
            assert np.all(m_lo[m_hi]) and r_lo <= r_hi

    def test_seeded_and_snr_positive(self):
        env = BeamEnvironment()
        runs = []
        for _ in range(2):
            sim = BeamSimulator(env, np.random.default_rng(9))
            runs.append([sim.step(0.7)[1] for _ in range(100)])
        assert runs[0] == runs[1]
        snr = env.snr(0.9, np.random.default_rng(0))
        assert np.all(snr >= env.snr_floor)

    def test_validate(self):
        assert BeamEnvironment(n_beams=1).validate()
        assert BeamEnvironment().validate() == []


class TestBacklog:
    def _ctx(self, b0, rates):
        return np.array(list(b0) + list(rates), dtype=float)

    def test_zero_everything(self):
        scn = BacklogScenario(n_ue=3, arrival_rate=0.0)
        x = self._ctx([0, 0, 0], [1, 1, 1])
        for a in (RR, PFCA):
            assert np.all(backlog_episode(scn, a, 0, context=x) == 0)

    def test_hand_count(self):
        scn = BacklogScenario(n_ue=1, horizon=4, arrival_rate=0.0, fading="none")
        assert backlog_episode(scn, RR, 0, context=self._ctx([10], [1]))[0] == 6

    @settings(max_examples=50)
    @given(st.floats(0, 30), st.floats(0, 30), st.floats(0.5, 2), st.integers(1, 60))
    def test_equal_rates_rr_equals_pf(self, b0, b1, rate, horizon):
        scn = BacklogScenario(n_ue=2, horizon=horizon, arrival_rate=0.0, fading="none")
        x = self._ctx([b0, b1], [rate, rate])
        np.testing.assert_allclose(backlog_episode(scn, RR, 0, context=x), backlog_episode(scn, PFCA, 0, context=x))

    def test_same_seed_same_randomness(self):
        scn = BacklogScenario()
        a = backlog_episode(scn, PFCA, 42)
        b = backlog_episode(scn, PFCA, 42)
        assert a.tobytes() == b.tobytes() and np.all(a >= 0)

    def test_policy(self):
        flat = BacklogScenario(policy_temperature=1e12)
        x = self._ctx([10] * 4, [1] * 4)
        assert propensity(flat, x, RR) == pytest.approx(0.5)
        easy = self._ctx([0] * 4, [2] * 4)
        assert propensity(BacklogScenario(), easy, RR) > 0.98
        rng = np.random.default_rng(0)
        scn = BacklogScenario()
        for _ in range(50):
            x = rng.uniform(0, 30, 8)
            a, p = logging_policy(scn, x, rng)
            assert p == propensity(scn, x, a)
