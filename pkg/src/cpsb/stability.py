"""Lyapunov-based thresholds on the state of charge.

``delta1``/``delta2`` are the SoC values where the short and long RC
capacitances change sign; below ``delta2`` the RC subsystem is no longer
asymptotically stable. ``beta`` is a current-dependent SoC threshold and
``epsilon_lb`` the smallest discharge current for which it is positive.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .battery import CAP_FLOOR, BatteryParams, BatteryState, circuit_values
from .errors import InvalidParams, InvalidRegime, NonpositiveCurrent, SingularCapacitance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StabilityThresholds:
    delta1: float
    delta2: float


def thresholds(p: BatteryParams) -> StabilityThresholds:
    k = p.k
    d1 = -math.log(k[2] / k[3]) / k[0]
    d2 = -math.log(k[4] / k[5]) / k[1]
    if not 0 < d1 < d2 < 1:
        raise InvalidParams(f"thresholds out of order: delta1={d1}, delta2={d2}")
    return StabilityThresholds(d1, d2)


def _cv(x1: float, p: BatteryParams):
    cv = circuit_values(float(x1), p)
    if abs(cv.C_ts) < CAP_FLOOR or abs(cv.C_tl) < CAP_FLOOR:
        raise SingularCapacitance(f"capacitance vanishes at x1={x1}")
    return cv


def v1(s: BatteryState) -> float:
    return 0.5 * (s.x2**2 + s.x3**2)


def v2(s: BatteryState) -> float:
    return 0.5 * (s.x1**2 + s.x2**2 + s.x3**2)


def _dissipation(x2, x3, cv) -> float:
    return x2**2 / (cv.R_ts * cv.C_ts) + x3**2 / (cv.R_tl * cv.C_tl)


def vdot1(s: BatteryState, p: BatteryParams) -> float:
    return -_dissipation(s.x2, s.x3, _cv(s.x1, p))


def vdot2(s: BatteryState, i: float, p: BatteryParams) -> float:
    cv = _cv(s.x1, p)
    return i * (s.x2 / cv.C_ts + s.x3 / cv.C_tl - s.x1 / cv.C_c) - _dissipation(s.x2, s.x3, cv)


def _regime(x2, x3, x1, p):
    if not (x2 > 0 and x3 > 0):
        raise InvalidRegime(f"need x2, x3 > 0, got x2={x2}, x3={x3}")
    cv = circuit_values(float(x1), p)
    if not (cv.C_ts > 0 and cv.C_tl > 0):
        raise InvalidRegime(f"capacitances not positive at x1={x1}")
    return cv


def beta(x2: float, x3: float, i: float, p: BatteryParams, x1: float) -> float:
    """Raw adaptive SoC threshold, circuit values frozen at SoC ``x1``."""
    if i <= 0:
        raise NonpositiveCurrent(f"discharge current must be positive, got {i}")
    cv = _regime(x2, x3, x1, p)
    return cv.C_c * (x2 / cv.C_ts + x3 / cv.C_tl - _dissipation(x2, x3, cv) / i)


def beta_threshold(x2: float, x3: float, i: float, p: BatteryParams, x1: float) -> float:
    """``beta`` clamped to ``[0, 1]`` for switching decisions."""
    raw = beta(x2, x3, i, p, x1)
    if not 0.0 <= raw <= 1.0:
        log.debug("beta=%.6g outside [0, 1] at x1=%.6g, clamped", raw, x1)
    return min(1.0, max(0.0, raw))


def epsilon_lb(x2: float, x3: float, p: BatteryParams, x1: float) -> float:
    """Discharge current at which ``beta`` is zero."""
    cv = _regime(x2, x3, x1, p)
    return _dissipation(x2, x3, cv) / (x2 / cv.C_ts + x3 / cv.C_tl)


def lti_eigenvalues(x1: float, p: BatteryParams) -> tuple:
    """Diagonal of the frozen-SoC RC system matrix."""
    cv = _cv(x1, p)
    return -1.0 / (cv.R_ts * cv.C_ts), -1.0 / (cv.R_tl * cv.C_tl)
