import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conformal_cal.errors import ContractViolation, InsufficientDataError
from conformal_cal.online_calibration import (
    ConstantFeature,
    LocalizedThreshold,
    OneHotBins,
    OnlineThreshold,
    RadialBasis,
    load_snapshot,
    locp_threshold,
    locp_update,
    long_run_risk,
    ocp_update,
    restore,
    save_snapshot,
    skip_round,
    telescoping_gap,
)

risks = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=300)


def test_ocp_examples():
    assert ocp_update(OnlineThreshold(0.5, 0.1, 0.1), 1.0).lam == pytest.approx(0.41)
    assert ocp_update(OnlineThreshold(0.5, 0.1, 0.1), 0.1).lam == 0.5
    assert ocp_update(OnlineThreshold(0.0, 0.2, 0.1), 0.0).lam == pytest.approx(0.02)


def test_ocp_functional_form_copies():
    s = OnlineThreshold(0.5, 0.1, 0.1)
    ocp_update(s, 1.0)
    assert s.lam == 0.5 and s.t == 1


def test_nonfinite_risk_and_bad_eta():
    with pytest.raises(ContractViolation):
        OnlineThreshold(0.5, 0.1, 0.1).update(math.nan)
    with pytest.raises(ContractViolation):
        OnlineThreshold(0.5, 0.0, 0.1)


def test_locp_threshold_examples():
    assert locp_threshold(LocalizedThreshold([0.3], ConstantFeature(), 0.1, 0.1), 123.0) == 0.3
    assert locp_threshold(LocalizedThreshold([0.2, 0.4], OneHotBins(2), 0.1, 0.1), 0.75) == 0.4
    assert locp_threshold(LocalizedThreshold([0.0, 0.0], OneHotBins(2), 0.1, 0.1), 0.2) == 0.0


def test_locp_update_examples():
    s = locp_update(LocalizedThreshold([0.5, 0.5], OneHotBins(2), 0.1, 0.1), 0.1, 1.0)
    np.testing.assert_allclose(s.theta, [0.41, 0.5])
    s2 = locp_update(s, 0.9, 0.1)
    np.testing.assert_array_equal(s2.theta, s.theta)


def test_dimension_mismatch():
    with pytest.raises(ContractViolation):
        LocalizedThreshold([0.1, 0.2, 0.3], OneHotBins(2), 0.1, 0.1).threshold(0.5)


@given(risks, st.floats(-2, 2))
def test_single_bin_matches_global(trace, lam0):
    g = OnlineThreshold(lam0, 0.1, 0.2)
    loc = LocalizedThreshold([lam0], OneHotBins(1), 0.1, 0.2)
    for r in trace:
        g.update(r)
        loc.update(r, 0.3)
        assert loc.threshold(0.3) == g.lam


@given(risks, st.floats(0.01, 1.0), st.floats(0.0, 1.0), st.floats(-5, 5))
def test_telescoping_identity(trace, eta, alpha, lam0):
    s = OnlineThreshold(lam0, eta, alpha)
    for r in trace:
        s.update(r)
    lhs = math.fsum(r - alpha for r in trace)
    assert abs(lhs - (lam0 - s.lam) / eta) < 1e-10 * max(1.0, abs(lhs), abs(lam0) / eta)
    avg, dev = long_run_risk(trace, alpha)
    assert dev == pytest.approx(telescoping_gap(lam0, s.lam, eta, len(trace)), abs=1e-10)


@given(st.lists(st.tuples(st.floats(0, 0.999), st.floats(0, 1)), min_size=1, max_size=200))
def test_per_bin_telescoping(steps):
    eta, alpha, nb = 0.05, 0.1, 4
    s = LocalizedThreshold(np.zeros(nb), OneHotBins(nb), eta, alpha)
    fmap = OneHotBins(nb)
    for x, r in steps:
        s.update(r, x)
    for b in range(nb):
        rs = [r for x, r in steps if fmap.index(x) == b]
        assert abs(math.fsum(r - alpha for r in rs) - (0.0 - s.theta[b]) / eta) < 1e-9


def test_adversarial_environment_bounded():
    """Adversary: risk 1 whenever lam > hi, 0 whenever lam < lo, else its worst choice."""
    lo, hi, eta, alpha, T = -0.3, 0.4, 0.05, 0.1, 5000
    s = OnlineThreshold(0.0, eta, alpha)
    trace = []
    rng = np.random.default_rng(0)
    for _ in range(T):
        lam = s.lam
        r = 1.0 if lam >= hi else 0.0 if lam <= lo else float(rng.integers(0, 2))
        trace.append(r)
        s.update(r)
        assert lo - eta <= s.lam <= hi + eta
    avg, dev = long_run_risk(trace, alpha)
    assert abs(dev) <= (hi - lo + 2 * eta) / (eta * T)
    assert abs(math.fsum(r - alpha for r in trace) - (0.0 - s.lam) / eta) < 1e-8


def test_long_run_risk_examples():
    assert long_run_risk([0.1] * 5, 0.1)[1] == pytest.approx(0.0, abs=1e-15)
    assert 0.1 + telescoping_gap(0.5, 0.48, 0.1, 2) == pytest.approx(0.2)
    with pytest.raises(InsufficientDataError):
        long_run_risk([], 0.1)


def test_skip_round():
    s = OnlineThreshold(0.7, 0.1, 0.1)
    for _ in range(5):
        skip_round(s, "no feedback")
    assert s.lam == 0.7 and len(s.audit) == 5
    a = OnlineThreshold(0.7, 0.1, 0.1)
    skip_round(a)
    a.update(0.5)
    b = OnlineThreshold(0.7, 0.1, 0.1).update(0.5)
    assert a.lam == b.lam


def test_inv_sqrt_schedule():
    s = OnlineThreshold(0.0, 0.1, 0.0, schedule="inv_sqrt")
    s.update(1.0).update(1.0)
    assert s.lam == pytest.approx(-0.1 - 0.1 / math.sqrt(2))


def test_radial_basis_bounded():
    rb = RadialBasis([0.0, 0.5, 1.0], 0.2)
    for x in np.linspace(-1, 2, 31):
        phi = rb(x)
        assert np.all((phi >= 0) & (phi <= 1)) and phi.sum() == pytest.approx(1.0)


def test_snapshot_roundtrip(tmp_path):
    g = OnlineThreshold(0.3, 0.1, 0.2).update(0.9)
    save_snapshot(g, tmp_path / "g.json")
    g2 = load_snapshot(tmp_path / "g.json")
    assert (g2.lam, g2.t, g2.eta, g2.alpha) == (g.lam, g.t, g.eta, g.alpha)
    loc = LocalizedThreshold([0.1, 0.2, 0.3], OneHotBins(3), 0.1, 0.2).update(0.9, 0.5)
    snap = loc.snapshot()
    assert snap["dim"] == 3 and snap["theta_1"] == loc.theta[1]
    loc2 = restore(snap, OneHotBins(3))
    np.testing.assert_array_equal(loc2.theta, loc.theta)
    with pytest.raises(ContractViolation):
        restore(snap)
