"""Computing-time perturbations and the robustness margin B_R.

B_R(w) is the smallest slack ``s_n - C_n`` among instances that expire at the
end of window ``w`` in the *nominal* run; B_R is its minimum over windows.
Because deadlines are never perturbed, nominal and perturbed runs share the
same window partition, so B_R can be computed before any perturbation is
known.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .engine import Policy, SchedState, simulate
from .errors import DeadlineExceeded, NegativeComputingTime, NoExpiryInRange
from .tasks import Perturbed, SparseEpsilon, TaskSet, TaskTrace

PerturbationTrace = Mapping  # task index -> SparseEpsilon | UniformEpsilon | list | dict


def _as_epsilon(samples):
    if hasattr(samples, "at"):
        return samples
    return SparseEpsilon(samples)


def perturb(nominal: TaskSet, samples: PerturbationTrace) -> TaskSet:
    """Actual task set with ``C = C_nom + eps`` per instance; ``T`` unchanged.

    Offsets given explicitly are checked eagerly; sampled offsets are checked
    as instances are realized.
    """
    traces = []
    for tr in nominal:
        eps = samples.get(tr.task_index)
        if eps is None:
            traces.append(tr)
            continue
        eps = _as_epsilon(eps)
        src = Perturbed(tr.source, eps)
        if isinstance(eps, SparseEpsilon):
            for k in eps.offsets:
                C, T = tr.chars(k)
                if C + eps.at(k) < 0:
                    raise NegativeComputingTime(
                        f"task {tr.task_index} instance {k}: C={C} + eps={eps.at(k)} < 0"
                    )
                if C + eps.at(k) > T:
                    raise DeadlineExceeded(
                        f"task {tr.task_index} instance {k}: C={C} + eps={eps.at(k)} > T={T}"
                    )
        traces.append(TaskTrace(tr.task_index, tr.first_arrival, src))
    return TaskSet(tuple(traces))


def eta_at(nominal_state: SchedState, actual_state: SchedState) -> tuple:
    """Spare perturbation ``-(s - s_nom)`` per task."""
    return tuple(sn - sa for sa, sn in zip(actual_state.s, nominal_state.s))


@dataclass(frozen=True)
class WindowMargin:
    w: int
    t_end: int
    margin: int | None  # None when no instance expires at t_end
    task: int | None
    instance: int | None


@dataclass
class RobustnessReport:
    windows: list  # WindowMargin per window
    B_R: int
    binding_window: int
    binding_task: int
    binding_instance: int

    @property
    def binding(self) -> WindowMargin:
        return self.windows[self.binding_window - 1]

    def rows(self):
        """CSV rows ``(w, t_end_us, B_R_us)``; undefined margins are blank."""
        for m in self.windows:
            yield m.w, m.t_end, "" if m.margin is None else m.margin


def robustness_measure(
    nominal: TaskSet,
    t_a: int,
    t_b: int,
    policy: Policy = Policy.FIXED,
    initial: SchedState | None = None,
) -> RobustnessReport:
    sim = simulate(nominal, t_a, t_b, policy, initial)
    margins = []
    best = None
    for rec in sim.windows:
        m = None
        for i, q in enumerate(rec.end.q):
            if q == 0:
                slack = rec.end.s[i] - rec.C[i]
                if m is None or slack < m[0]:
                    m = (slack, i + 1, rec.instances[i])
        if m is None:
            margins.append(WindowMargin(rec.w, rec.t_end, None, None, None))
            continue
        margins.append(WindowMargin(rec.w, rec.t_end, *m))
        if best is None or m[0] < best[0]:
            best = (m[0], rec.w, m[1], m[2])
    if best is None:
        raise NoExpiryInRange(f"no instance expires within [{t_a}, {t_b}]")
    return RobustnessReport(margins, *best)
