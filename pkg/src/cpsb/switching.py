"""Battery failure detection: adaptive, voltage and capacity thresholding.

Also holds the scoring rules that classify a run as a hit, a false alarm or
a missed detection, and the DR/FAR/MDR tally.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass

from .battery import BatteryParams
from .errors import EmptyRuns, NoDecisionInRun
from .estimator import Estimate
from .stability import beta_threshold, epsilon_lb


@dataclass(frozen=True)
class SwitchDecision:
    S: int
    tau_s: float | None  # None stands for "no switch" (tau_s = -1)

    def __post_init__(self):
        if bool(self.S) != (self.tau_s is not None):
            raise ValueError("S=1 iff tau_s is set")


NO_SWITCH = SwitchDecision(0, None)


def at_decide(estimate: Estimate, i_k: float, k: int, h: float, p: BatteryParams) -> SwitchDecision:
    """Adaptive thresholding at sample ``k``.

    Switch when the current exceeds its lower bound and the estimated SoC is
    below the adaptive threshold. Below the current bound, and while the RC
    voltages are not both positive (e.g. a fresh, unloaded battery), there
    is no decision to make and the answer is "no switch". A nonpositive
    capacitance at the estimate propagates ``InvalidRegime``.
    """
    x1, x2, x3 = estimate.x_hat
    if i_k <= 0 or x2 <= 0 or x3 <= 0:
        return NO_SWITCH
    if i_k <= epsilon_lb(x2, x3, p, x1):
        return NO_SWITCH
    if x1 < beta_threshold(x2, x3, i_k, p, x1):
        return SwitchDecision(1, h * k)
    return NO_SWITCH


def vt_decide(y: float, v_threshold: float) -> bool:
    return y <= v_threshold


def ct_decide(x1_hat: float, c_threshold: float) -> bool:
    return x1_hat <= c_threshold


class Outcome(enum.Enum):
    HIT = "hit"
    FALSE_ALARM = "false_alarm"
    MISS = "miss"


@dataclass(frozen=True)
class Criteria:
    v_nominal: float  # no-load voltage of a fresh battery (f2 = 1, x1 = 1)
    vt_voltage: float = 3.5
    soc_limit: float = 0.10
    fa_voltage: float = 3.6
    miss_drop: float = 0.33

    @property
    def miss_voltage(self) -> float:
        return (1.0 - self.miss_drop) * self.v_nominal


@dataclass(frozen=True)
class StrategyRun:
    """First trigger of one strategy during one discharge."""

    strategy: str  # "VT" | "CT" | "AT"
    t: float | None = None
    y: float | None = None  # measured terminal voltage at the trigger
    x1_hat: float | None = None
    x1_true: float | None = None

    @property
    def triggered(self) -> bool:
        return self.t is not None


def classify(run: StrategyRun, criteria: Criteria, strict: bool = False) -> Outcome:
    """Score a run; a strategy that never triggers is a missed detection
    (``strict`` raises :class:`NoDecisionInRun` instead)."""
    if not run.triggered:
        if strict:
            raise NoDecisionInRun(f"{run.strategy} never triggered")
        return Outcome.MISS
    if run.strategy == "VT":
        # the trigger itself means V <= vt_voltage
        return Outcome.HIT if run.x1_hat <= criteria.soc_limit else Outcome.FALSE_ALARM
    if run.strategy in ("CT", "AT"):
        if run.y > criteria.fa_voltage:
            return Outcome.FALSE_ALARM
        if run.y <= criteria.miss_voltage:
            return Outcome.MISS
        return Outcome.HIT
    raise ValueError(f"unknown strategy {run.strategy!r}")


@dataclass(frozen=True)
class OutcomeTally:
    T: int
    H: int
    F: int
    M: int

    @property
    def DR(self) -> float:
        return self.H / self.T

    @property
    def FAR(self) -> float:
        return self.F / self.T

    @property
    def MDR(self) -> float:
        return self.M / self.T


def tally(outcomes) -> OutcomeTally:
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyRuns("no runs to tally")
    c = Counter(outcomes)
    return OutcomeTally(len(outcomes), c[Outcome.HIT], c[Outcome.FALSE_ALARM], c[Outcome.MISS])
