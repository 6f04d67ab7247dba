"""Exact schedulability test over a finite interval, one verdict per window."""

from __future__ import annotations

from dataclasses import dataclass, field

from .engine import Policy, SchedState, SimResult, simulate
from .tasks import TaskSet


def window_schedulable(n: int, end_state: SchedState, C_n: int) -> int:
    """1 iff task ``n`` meets its deadline inside the window ending at ``end_state``.

    An instance expiring at the window end (``q_n = 0``) must have received
    at least its computing time as spare; ``C_n == s_n`` is a success.
    """
    q_n, s_n = end_state.q[n - 1], end_state.s[n - 1]
    if q_n == 0:
        return 1 if C_n <= s_n else 0
    return 1


@dataclass
class SchedReport:
    ds: dict  # task index -> [(w, ds_n(w)), ...]
    failures: list = field(default_factory=list)  # (task, w, t_f, t_end)

    @property
    def schedulable(self) -> bool:
        return not self.failures

    @property
    def schedulable_flag(self) -> int:
        return int(self.schedulable)

    def misses(self) -> set:
        """``(task, deadline)`` pairs of every missed deadline."""
        return {(n, t_end) for n, _, _, t_end in self.failures}

    def rows(self, windows):
        """CSV rows ``(w, t_f_us, t_end_us, ds_1..ds_N)``."""
        N = len(self.ds)
        for i, rec in enumerate(windows):
            yield (rec.w, rec.t_f, rec.t_end, *(self.ds[n][i][1] for n in range(1, N + 1)))


def report_from(sim: SimResult) -> SchedReport:
    N = len(sim.trace.segments)
    ds = {n: [] for n in range(1, N + 1)}
    failures = []
    for rec in sim.windows:
        for n in range(1, N + 1):
            v = window_schedulable(n, rec.end, rec.C[n - 1])
            ds[n].append((rec.w, v))
            if not v:
                failures.append((n, rec.w, rec.t_f, rec.t_end))
    return SchedReport(ds, failures)


def dynamic_schedulability_test(
    ts: TaskSet,
    t_a: int,
    t_b: int,
    policy: Policy = Policy.FIXED,
    initial: SchedState | None = None,
) -> SchedReport:
    return report_from(simulate(ts, t_a, t_b, policy, initial))
