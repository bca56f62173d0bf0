"""Conformal calibration tools for wireless network applications.

Modules:

- ``core_conformal``: split conformal prediction sets
- ``risk_control``: learn-then-test and adaptive e-process certification
- ``online_calibration``: online and localized threshold updates
- ``counterfactual``: propensity-weighted conformal intervals
- ``scenarios``: the simulators the experiments run on
- ``harness``: configs, Monte-Carlo runners and the ``conformal-cal`` CLI
"""

__version__ = "0.1.0"
