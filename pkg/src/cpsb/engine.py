"""Dynamic timing model: fixed-priority windows and state-variable evolution.

The state at an instant is the pair ``(q, s)``: dynamic deadlines and spares,
one entry per task, in integer microseconds. Residues ``r = max(0, C - s)``
are always derived. Within a fixed priority window no instance arrives, so
the evolution from the window start has a closed form and whole windows are
advanced in one step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyWindow, InconsistentState, OutOfDomain, OutOfWindow
from .tasks import TaskSet


class Policy(enum.Enum):
    FIXED = "rms"  # fixed priority by task index (RMS when sorted by period)
    EDF = "edf"

    @classmethod
    def parse(cls, name: str) -> "Policy":
        key = name.strip().lower()
        if key in ("rms", "rm", "fixed", "fp"):
            return cls.FIXED
        if key == "edf":
            return cls.EDF
        raise ValueError(f"unknown scheduling policy {name!r}")


class Mode(float, enum.Enum):
    FREE = 0.0
    PREEMPTED = 0.5
    EXECUTING = 1.0


@dataclass(frozen=True)
class SchedState:
    q: tuple
    s: tuple

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(int(v) for v in self.q))
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        if len(self.q) != len(self.s):
            raise ValueError("q and s must have the same length")
        if min(self.q, default=0) < 0 or min(self.s, default=0) < 0:
            raise ValueError(f"state variables must be nonnegative: q={self.q}, s={self.s}")

    @classmethod
    def zero(cls, n: int) -> "SchedState":
        return cls((0,) * n, (0,) * n)

    def residues(self, C: Sequence[int]) -> tuple:
        return tuple(max(0, c - s) for c, s in zip(C, self.s))


@dataclass(frozen=True)
class WindowRecord:
    w: int
    t_f: int
    L_f: int
    start: SchedState  # at t_f, after arrival resets
    end: SchedState  # at (t_f + L_f)⁻
    C: tuple  # computing times of the effective instances
    instances: tuple  # effective instance index per task

    @property
    def t_end(self) -> int:
        return self.t_f + self.L_f


class ModeTrace:
    """Per-task right-open segments ``(start, end, mode)``, normalized.

    Zero-length segments are dropped and adjacent segments with equal mode
    are merged, so the mode at a boundary is the mode of the segment that
    starts there.
    """

    def __init__(self, n_tasks: int, t_a: int):
        self.t_a = t_a
        self.t_b = t_a
        self.segments = [[] for _ in range(n_tasks)]

    def add(self, n: int, start: int, end: int, mode: Mode) -> None:
        if end <= start:
            return
        segs = self.segments[n - 1]
        if segs and segs[-1][2] is mode and segs[-1][1] == start:
            segs[-1] = (segs[-1][0], end, mode)
        else:
            segs.append((start, end, mode))
        if end > self.t_b:
            self.t_b = end

    def extend(self, other: "ModeTrace") -> None:
        for n, segs in enumerate(other.segments, 1):
            for a, b, m in segs:
                self.add(n, a, b, m)

    def mode_at(self, n: int, t: int) -> Mode:
        if not self.t_a <= t < self.t_b:
            raise OutOfDomain(f"t={t} outside trace domain [{self.t_a}, {self.t_b})")
        segs = self.segments[n - 1]
        lo, hi = 0, len(segs)
        while lo < hi:
            mid = (lo + hi) // 2
            if segs[mid][1] <= t:
                lo = mid + 1
            else:
                hi = mid
        return segs[lo][2]

    def rows(self):
        """CSV rows ``(task, t_start_us, t_end_us, mode)``."""
        for n, segs in enumerate(self.segments, 1):
            for a, b, m in segs:
                yield n, a, b, m.value

    def __eq__(self, other):
        return isinstance(other, ModeTrace) and self.segments == other.segments


@dataclass
class SimResult:
    windows: list
    trace: ModeTrace
    final: SchedState  # state at t_b⁻

    def window_rows(self):
        """CSV rows ``(w, t_f_us, L_f_us, q_1..q_N, s_1..s_N)`` at window end."""
        for rec in self.windows:
            yield (rec.w, rec.t_f, rec.L_f, *rec.end.q, *rec.end.s)


# -- policy maps -----------------------------------------------------------------

def hp_fixed(n: int) -> frozenset:
    """Higher-priority set under index-ordered fixed priority."""
    return frozenset(range(1, n))


def hp_edf(n: int, q: Sequence[int]) -> frozenset:
    """Tasks with a strictly closer deadline, ties broken by smaller index."""
    qn = q[n - 1]
    return frozenset(
        i for i in range(1, len(q) + 1) if q[i - 1] < qn or (q[i - 1] == qn and i < n)
    )


def priority_order(policy: Policy, q: Sequence[int]) -> list:
    """0-based task positions from highest to lowest priority."""
    if policy is Policy.FIXED:
        return list(range(len(q)))
    return sorted(range(len(q)), key=lambda i: (q[i], i))


def _preemption(policy: Policy, q: Sequence[int], r: Sequence[int]) -> list:
    """``P_n = sum of r_i over hp(n)`` for every task (0-based)."""
    P = [0] * len(q)
    acc = 0
    for i in priority_order(policy, q):
        P[i] = acc
        acc += r[i]
    return P


# -- single window ---------------------------------------------------------------

def window_length(q_at_tf: Sequence[int], t_f: int, t_b: int) -> int:
    if t_f >= t_b:
        raise EmptyWindow(f"window start {t_f} is not before {t_b}")
    if min(q_at_tf) <= 0:
        raise ValueError("arrivals must be applied before computing the window length")
    return min(min(q_at_tf), t_b - t_f)


def arrival_reset(state_before: SchedState, T: Sequence[int]) -> SchedState:
    """State at ``t_f`` from the state at ``t_f⁻``."""
    q = [qn if qn > 0 else Tn for qn, Tn in zip(state_before.q, T)]
    s = [sn if qn > 0 else 0 for qn, sn in zip(state_before.q, state_before.s)]
    return SchedState(q, s)


def step_window(t_f: int, t: int, state_before: SchedState, chars, policy: Policy) -> SchedState:
    """State at ``t`` inside the window starting at ``t_f``.

    ``chars`` holds ``(C_n(t_f), T_n(t_f))`` per task. ``t`` may equal the
    window end, in which case the returned state is the left limit there.
    """
    C = [c for c, _ in chars]
    start = arrival_reset(state_before, [T for _, T in chars])
    end = t_f + min(start.q)
    if not t_f <= t <= end:
        raise OutOfWindow(f"t={t} outside window [{t_f}, {end}]")
    P = _preemption(policy, start.q, start.residues(C))
    dt = t - t_f
    return SchedState(
        [qn - dt for qn in start.q],
        [sn + max(0, dt - Pn) for sn, Pn in zip(start.s, P)],
    )


# -- whole interval --------------------------------------------------------------

def simulate(
    ts: TaskSet,
    t_a: int,
    t_b: int,
    policy: Policy = Policy.FIXED,
    initial: SchedState | None = None,
    record_windows: bool = True,
) -> SimResult:
    """Tile ``[t_a, t_b]`` with fixed priority windows and evolve the state.

    ``initial`` is the state at ``t_a⁻``; the default all-zero state makes
    every task's instance arrive at ``t_a``.
    """
    if t_a >= t_b:
        raise EmptyWindow(f"empty interval [{t_a}, {t_b}]")
    N = len(ts)
    traces = ts.tasks
    state = initial or SchedState.zero(N)
    q, s = list(state.q), list(state.s)
    cur = [0] * N
    C = [0] * N
    for i, tr in enumerate(traces):
        if q[i] > 0:
            k = tr.index_at(t_a)
            inst = tr.instance(k)
            if inst.deadline - t_a != q[i]:
                raise InconsistentState(
                    f"task {i + 1}: q={q[i]} at t_a={t_a} but effective instance "
                    f"expires at {inst.deadline}"
                )
            cur[i], C[i] = k, inst.computing_time

    windows = []
    trace = ModeTrace(N, t_a)
    add = trace.add
    t_f, w = t_a, 0
    while t_f < t_b:
        w += 1
        for i in range(N):
            if q[i] == 0:
                tr = traces[i]
                k = tr.index_at(t_f)
                if tr.arrival(k) != t_f:
                    raise InconsistentState(
                        f"task {i + 1}: arrival reset at {t_f} but instance {k} "
                        f"arrives at {tr.arrival(k)}"
                    )
                C[i], q[i] = tr.chars(k)
                s[i] = 0
                cur[i] = k
        L = min(min(q), t_b - t_f)
        r = [max(0, c - sp) for c, sp in zip(C, s)]
        P = _preemption(policy, q, r)
        t_end = t_f + L
        for i in range(N):
            a = t_f + min(P[i], L)
            b = t_f + min(P[i] + r[i], L)
            add(i + 1, t_f, a, Mode.PREEMPTED)
            add(i + 1, a, b, Mode.EXECUTING)
            add(i + 1, b, t_end, Mode.FREE)
        q_end = [qn - L for qn in q]
        s_end = [sn + max(0, L - Pn) for sn, Pn in zip(s, P)]
        if record_windows:
            windows.append(WindowRecord(
                w, t_f, L, SchedState(q, s), SchedState(q_end, s_end), tuple(C), tuple(cur)
            ))
        q, s = q_end, s_end
        t_f = t_end
    return SimResult(windows, trace, SchedState(q, s))


def state_at(ts: TaskSet, t: int, policy: Policy = Policy.FIXED, origin: int | None = None) -> SchedState:
    """State at ``t⁻`` reached from an all-zero state at ``origin``.

    ``origin`` defaults to the earliest first arrival, which must be shared by
    all tasks for the zero-state convention to hold.
    """
    if origin is None:
        origin = min(tr.first_arrival for tr in ts)
    if t == origin:
        return SchedState.zero(len(ts))
    return simulate(ts, origin, t, policy, record_windows=False).final
