"""Equivalent-circuit Li-ion battery model (Chen–Mora form) and its integrator.

State: ``x1`` state of charge, ``x2``/``x3`` voltages across the short and
long RC pairs. Every circuit element is an exponential-plus-constant function
of ``x1``; the open-circuit voltage adds a cubic. Only discharge is modeled.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InvalidParams, SingularCapacitance, StepTooLarge

CAP_FLOOR = 1e-9  # farad


@dataclass(frozen=True)
class BatteryParams:
    k: tuple  # k1..k21
    C_Ah: float
    f1: float = 1.0
    f2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(float(v) for v in self.k))
        self.validate()

    def validate(self) -> None:
        k = self.k
        if len(k) != 21:
            raise InvalidParams(f"expected 21 coefficients, got {len(k)}")
        if min(k) <= 0:
            raise InvalidParams("all k_i must be positive")
        if not all(a < b for a, b in zip(k[:6], k[1:6])):
            raise InvalidParams("need 0 < k1 < k2 < k3 < k4 < k5 < k6")
        if not np.log(k[2] / k[3]) / k[0] > np.log(k[4] / k[5]) / k[1]:
            raise InvalidParams("need (1/k1) ln(k3/k4) > (1/k2) ln(k5/k6)")
        if self.C_Ah <= 0:
            raise InvalidParams("capacity must be positive")
        for name in ("f1", "f2"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise InvalidParams(f"{name} must lie in (0, 1], got {v}")

    @property
    def Cc(self) -> float:
        """Usable charge in coulombs."""
        return 3600.0 * self.C_Ah * self.f1 * self.f2

    def with_f2(self, f2: float) -> "BatteryParams":
        return replace(self, f2=f2)

    def to_dict(self) -> dict:
        d = {f"k{i}": v for i, v in enumerate(self.k, 1)}
        d.update(C_Ah=self.C_Ah, f1=self.f1, f2=self.f2)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BatteryParams":
        try:
            k = [d[f"k{i}"] for i in range(1, 22)]
            return cls(tuple(k), float(d["C_Ah"]), float(d.get("f1", 1.0)), float(d.get("f2", 1.0)))
        except KeyError as exc:
            raise InvalidParams(f"parameter file is missing {exc}") from None

    @classmethod
    def load(cls, path) -> "BatteryParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def default_params() -> BatteryParams:
    """Shipped parameter set (``data/default_battery.json``, 275 mAh)."""
    with resources.files("cpsb").joinpath("data/default_battery.json").open() as fh:
        return BatteryParams.from_dict(json.load(fh))


@dataclass(frozen=True)
class BatteryState:
    x1: float
    x2: float = 0.0
    x3: float = 0.0

    def __iter__(self):
        return iter((self.x1, self.x2, self.x3))


@dataclass(frozen=True)
class CircuitValues:
    C_ts: float
    C_tl: float
    R_s: float
    R_ts: float
    R_tl: float
    E_o: float
    C_c: float


def circuit_values(x1, p: BatteryParams) -> CircuitValues:
    """All SoC-dependent circuit elements; ``x1`` may be a scalar or an array."""
    k = p.k
    e = np.exp
    x1 = np.asarray(x1, dtype=float) if not isinstance(x1, float) else x1
    return CircuitValues(
        C_ts=-k[3] * e(-k[0] * x1) + k[2],
        C_tl=-k[5] * e(-k[1] * x1) + k[4],
        R_s=k[6] * e(-k[7] * x1) + k[8],
        R_ts=k[9] * e(-k[10] * x1) + k[11],
        R_tl=k[12] * e(-k[13] * x1) + k[14],
        E_o=-k[15] * e(-k[16] * x1) + k[17] + k[18] * x1 - k[19] * x1**2 + k[20] * x1**3,
        C_c=p.Cc,
    )


def _check_caps(cv: CircuitValues) -> None:
    if abs(cv.C_ts) < CAP_FLOOR or abs(cv.C_tl) < CAP_FLOOR:
        raise SingularCapacitance(
            f"capacitance below {CAP_FLOOR} F (C_ts={cv.C_ts:.3g}, C_tl={cv.C_tl:.3g})"
        )


def derivatives(s: BatteryState, i: float, p: BatteryParams) -> tuple:
    """``(dx1/dt, dx2/dt, dx3/dt)`` in per-second units."""
    cv = circuit_values(float(s.x1), p)
    _check_caps(cv)
    return (
        -i / cv.C_c,
        -s.x2 / (cv.R_ts * cv.C_ts) + i / cv.C_ts,
        -s.x3 / (cv.R_tl * cv.C_tl) + i / cv.C_tl,
    )


def output_voltage(s: BatteryState, i: float, p: BatteryParams) -> float:
    cv = circuit_values(float(s.x1), p)
    return cv.E_o - s.x2 - s.x3 - i * cv.R_s


# -- load currents ---------------------------------------------------------------

class PiecewiseCurrent:
    """Right-continuous piecewise-constant current.

    ``times[j]`` is the start of the piece carrying ``values[j]``; the last
    piece extends indefinitely.
    """

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1 or not len(self.times):
            raise ValueError("times and values must be equal-length 1-D arrays")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    def __call__(self, t):
        j = np.searchsorted(self.times, t, side="right") - 1
        if np.any(j < 0):
            raise ValueError("current queried before its first breakpoint")
        return self.values[j]

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        m = (self.times > t0) & (self.times < t1)
        return self.times[m]

    def mean(self, a: float, b: float) -> float:
        """Average current over ``[a, b]``."""
        return self.charge(a, b) / (b - a)

    def charge(self, a: float, b: float) -> float:
        edges = np.concatenate(([a], self.breakpoints(a, b), [b]))
        return float(np.sum(self(edges[:-1]) * np.diff(edges)))


# -- integration -----------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    i: np.ndarray  # current on [t_j, t_{j+1}), last entry repeats
    y: np.ndarray
    clamp_events: list = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    def state(self, j: int) -> BatteryState:
        return BatteryState(float(self.x1[j]), float(self.x2[j]), float(self.x3[j]))

    def rows(self):
        """CSV rows ``(t_s, x1, x2_V, x3_V, y_V, i_A)``."""
        for row in zip(self.t, self.x1, self.x2, self.x3, self.y, self.i):
            yield tuple(float(v) for v in row)

    def select(self, mask_or_idx) -> "Trajectory":
        return Trajectory(
            self.t[mask_or_idx], self.x1[mask_or_idx], self.x2[mask_or_idx],
            self.x3[mask_or_idx], self.i[mask_or_idx], self.y[mask_or_idx], list(self.clamp_events),
        )


def _affine_rk4(h, a0, am, a1, c0, cm, c1):
    """Per-step ``x' = A x + B`` equivalent to one classical RK4 step of
    ``dx/dt = -a(t) x + c(t)`` with ``a, c`` sampled at left, mid, right."""
    al1 = -a0
    al2 = -am * (1 + 0.5 * h * al1)
    al3 = -am * (1 + 0.5 * h * al2)
    al4 = -a1 * (1 + h * al3)
    g1 = c0
    g2 = -am * 0.5 * h * g1 + cm
    g3 = -am * 0.5 * h * g2 + cm
    g4 = -a1 * h * g3 + c1
    A = 1 + h / 6 * (al1 + 2 * al2 + 2 * al3 + al4)
    B = h / 6 * (g1 + 2 * g2 + 2 * g3 + g4)
    return A, B


def _scan(x0: float, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = itertools.accumulate(zip(A.tolist(), B.tolist()), lambda x, ab: ab[0] * x + ab[1], initial=x0)
    return np.fromiter(out, dtype=float, count=len(A) + 1)


def _rk4_nodes(s0: BatteryState, t: np.ndarray, cur: np.ndarray, p: BatteryParams):
    """Classical RK4 over the node grid ``t`` with current ``cur[j]`` on step j.

    ``dx1/dt`` does not depend on ``x2, x3`` and is constant on each step, so
    the RK4 stage values of ``x1`` are exact and the ``x2``/``x3`` updates are
    affine maps; the coefficient work is vectorized over all steps.
    Returns ``(x1, x2, x3, clamp_events, bad_step)``; ``bad_step`` is the
    first step touching a capacitance zero, or ``None``.
    """
    h = np.diff(t)
    Cc = p.Cc
    dq = h * cur / Cc
    x1 = s0.x1 - np.concatenate(([0.0], np.cumsum(dq)))
    clamp_events = []
    if np.any((x1 < 0) | (x1 > 1)):
        out = np.flatnonzero((x1 < 0) | (x1 > 1))
        clamp_events = [(float(t[j]), float(x1[j])) for j in out[:1]]
        x1 = np.clip(x1, 0.0, 1.0)
    x1m = np.clip(x1[:-1] - 0.5 * dq, 0.0, 1.0)
    cvl, cvm = circuit_values(x1, p), circuit_values(x1m, p)

    bad = (np.abs(cvl.C_ts[:-1]) < CAP_FLOOR) | (np.abs(cvl.C_tl[:-1]) < CAP_FLOOR)
    bad |= (np.abs(cvm.C_ts) < CAP_FLOOR) | (np.abs(cvm.C_tl) < CAP_FLOOR)
    bad |= (np.abs(cvl.C_ts[1:]) < CAP_FLOOR) | (np.abs(cvl.C_tl[1:]) < CAP_FLOOR)
    bad |= np.sign(cvl.C_ts[:-1]) != np.sign(cvl.C_ts[1:])
    bad |= np.sign(cvl.C_tl[:-1]) != np.sign(cvl.C_tl[1:])
    bad_step = int(np.argmax(bad)) if bad.any() else None

    def coeffs(cv):
        return 1.0 / (cv.R_ts * cv.C_ts), 1.0 / cv.C_ts, 1.0 / (cv.R_tl * cv.C_tl), 1.0 / cv.C_tl

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        al, bl, all_, btl = coeffs(cvl)
        am, bm, amt, bmt = coeffs(cvm)
        A2, B2 = _affine_rk4(h, al[:-1], am, al[1:], bl[:-1] * cur, bm * cur, bl[1:] * cur)
        A3, B3 = _affine_rk4(h, all_[:-1], amt, all_[1:], btl[:-1] * cur, bmt * cur, btl[1:] * cur)
    n = len(h) if bad_step is None else bad_step
    x2 = _scan(s0.x2, A2[:n], B2[:n])
    x3 = _scan(s0.x3, A3[:n], B3[:n])
    return x1[: n + 1], x2, x3, clamp_events, bad_step


def _grid(t0: float, t1: float, h: float, extra=()) -> np.ndarray:
    n = int(np.floor((t1 - t0) / h + 1e-9))
    g = t0 + h * np.arange(n + 1)
    g = np.concatenate((g, [t1], np.asarray(extra, dtype=float)))
    g = np.unique(g[(g >= t0) & (g <= t1)])
    # drop slivers created by float noise next to a regular node
    keep = np.concatenate(([True], np.diff(g) > 1e-12 * max(1.0, abs(t1))))
    return g[keep]


def _currents(current, t: np.ndarray) -> np.ndarray:
    if isinstance(current, PiecewiseCurrent):
        return np.asarray(current(t[:-1]), dtype=float)
    if callable(current):
        return np.array([float(current(tj)) for tj in t[:-1]])
    return np.full(len(t) - 1, float(current))


def _trajectory(t, x1, x2, x3, cur, p, clamp_events) -> Trajectory:
    icol = np.concatenate((cur[: len(t) - 1], cur[len(t) - 2 : len(t) - 1])) if len(t) > 1 else np.zeros(1)
    cv = circuit_values(x1, p)
    y = cv.E_o - x2 - x3 - icol * cv.R_s
    return Trajectory(t, x1, x2, x3, icol, y, clamp_events)


def integrate(
    s0: BatteryState,
    current: Callable | PiecewiseCurrent | float,
    t0: float,
    t1: float,
    h: float,
    p: BatteryParams,
    check: bool = True,
    rtol: float = 1e-6,
    dense: bool = False,
) -> Trajectory:
    """Fixed-step RK4 from ``t0`` to ``t1``.

    Breakpoints of a :class:`PiecewiseCurrent` are inserted into the grid so
    no current step falls inside an integration step; a plain callable is
    evaluated at each step's left node. The returned trajectory holds the
    regular ``h`` grid (every node when ``dense``). With ``check`` the run is
    repeated at half step and the worst per-component deviation, relative to
    that component's peak magnitude, must stay below ``rtol``.

    Raises :class:`SingularCapacitance` (with ``partial`` set to the
    trajectory up to the offending step) when a capacitance reaches zero.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    if t1 <= t0:
        raise ValueError("empty integration interval")
    extra = current.breakpoints(t0, t1) if isinstance(current, PiecewiseCurrent) else ()
    t = _grid(t0, t1, h, extra)
    cur = _currents(current, t)
    x1, x2, x3, clamps, bad = _rk4_nodes(s0, t, cur, p)
    n = len(x1)
    traj = _trajectory(t[:n], x1, x2, x3, cur, p, clamps)
    if not dense:
        regular = np.isclose((traj.t - t0) / h, np.round((traj.t - t0) / h), rtol=0, atol=1e-6)
        regular[-1] = regular[-1] or traj.t[-1] == t1
        traj = traj.select(regular)
    if bad is not None:
        raise SingularCapacitance(
            f"capacitance reaches zero near t={t[bad]:.6g} s (x1={x1[-1]:.6g})",
            t=float(t[bad]), partial=traj,
        )
    if check:
        step_doubling_error(s0, t, cur, p, x1, x2, x3, rtol)
    return traj


def step_doubling_error(s0, t, cur, p, x1, x2, x3, rtol=None) -> float:
    """Worst relative deviation between the run on ``t`` and on ``t`` halved."""
    mid = 0.5 * (t[:-1] + t[1:])
    th = np.empty(2 * len(t) - 1)
    th[0::2], th[1::2] = t, mid
    ch = np.repeat(cur, 2)
    hx1, hx2, hx3, _, bad = _rk4_nodes(s0, th, ch, p)
    if bad is not None:
        raise SingularCapacitance("capacitance reaches zero during the half-step check")
    err = 0.0
    for full, half in ((x1, hx1[0::2]), (x2, hx2[0::2]), (x3, hx3[0::2])):
        scale = max(float(np.max(np.abs(half))), 1e-12)
        err = max(err, float(np.max(np.abs(full - half))) / scale)
    if rtol is not None and err > rtol:
        raise StepTooLarge(f"step-doubling deviation {err:.3g} exceeds {rtol:.3g}")
    return err
