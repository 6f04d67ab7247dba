"""Time base, acyclic tasks and task sets.

All times are integer microseconds. A task is *acyclic*: every instance may
carry its own computing time ``C`` and relative deadline ``T``, and instance
``k+1`` arrives exactly at the absolute deadline of instance ``k``.
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DeadlineExceeded,
    InvalidConfig,
    InvalidTask,
    NegativeComputingTime,
    QueryBeforeFirstArrival,
)

US_PER_S = 1_000_000
US_PER_MS = 1_000


def seconds(x: float) -> int:
    """Convert seconds to integer microseconds (rounded to the nearest µs)."""
    return int(round(x * US_PER_S))


def millis(x: float) -> int:
    return int(round(x * US_PER_MS))


def to_seconds(t: int) -> float:
    return t / US_PER_S


class Side(enum.Enum):
    """Which side of an instant a boundary query refers to.

    ``BEFORE`` stands for ``t⁻``, the limit from the left; it is a tag on the
    query, never a separate tick.
    """

    AT = "at"
    BEFORE = "before"


@dataclass(frozen=True)
class TaskInstance:
    task_index: int
    instance_index: int
    arrival: int
    computing_time: int
    relative_deadline: int

    @property
    def deadline(self) -> int:
        return self.arrival + self.relative_deadline


# -- instance sources ----------------------------------------------------------

class Periodic:
    """Constant ``(C, T)`` for every instance."""

    def __init__(self, C: int, T: int):
        self.C = int(C)
        self.T = int(T)
        if self.T <= 0 or not 0 <= self.C <= self.T:
            raise InvalidTask(f"need 0 <= C <= T and T > 0, got C={C}, T={T}")

    def chars(self, k: int) -> tuple[int, int]:
        return self.C, self.T

    def __repr__(self):
        return f"Periodic(C={self.C}, T={self.T})"


class Explicit:
    """A finite, explicit list of ``(C, T)`` pairs (instance 1 first)."""

    def __init__(self, pairs: Iterable[Sequence[int]]):
        self.pairs = [(int(c), int(t)) for c, t in pairs]
        if not self.pairs:
            raise InvalidTask("explicit trace needs at least one instance")

    def chars(self, k: int) -> tuple[int, int]:
        if k > len(self.pairs):
            raise InvalidTask(
                f"explicit trace has {len(self.pairs)} instances, instance {k} requested"
            )
        return self.pairs[k - 1]

    def __repr__(self):
        return f"Explicit({len(self.pairs)} instances)"


class SparseEpsilon:
    """Per-instance computing-time offsets; instances not listed get zero."""

    def __init__(self, offsets: Mapping[int, int] | Sequence[int] = ()):
        if isinstance(offsets, Mapping):
            self.offsets = {int(k): int(v) for k, v in offsets.items()}
        else:
            self.offsets = {k: int(v) for k, v in enumerate(offsets, start=1)}

    def at(self, k: int) -> int:
        return self.offsets.get(k, 0)


class UniformEpsilon:
    """Integer offsets drawn uniformly from ``[lo, hi]`` µs, one per instance.

    Samples are realized lazily in fixed-size blocks from a single generator,
    so the value of instance ``k`` does not depend on query order.
    """

    _BLOCK = 4096

    def __init__(self, lo: int, hi: int, seed: int):
        if hi < lo:
            raise InvalidTask(f"empty perturbation range [{lo}, {hi}]")
        self.lo, self.hi, self.seed = int(lo), int(hi), int(seed)
        self._rng = np.random.default_rng(self.seed)
        self._samples: list[int] = []

    def at(self, k: int) -> int:
        while len(self._samples) < k:
            block = self._rng.integers(self.lo, self.hi, size=self._BLOCK, endpoint=True)
            self._samples.extend(int(v) for v in block)
        return self._samples[k - 1]

    def realized(self, n: int) -> list[int]:
        self.at(n)
        return self._samples[:n]


class Perturbed:
    """A base source with a per-instance offset added to ``C``."""

    def __init__(self, base, epsilon):
        self.base = base
        self.epsilon = epsilon

    def chars(self, k: int) -> tuple[int, int]:
        C, T = self.base.chars(k)
        eps = self.epsilon.at(k)
        if C + eps < 0:
            raise NegativeComputingTime(f"instance {k}: C={C} with offset {eps} is negative")
        if C + eps > T:
            raise DeadlineExceeded(f"instance {k}: C={C} with offset {eps} exceeds T={T}")
        return C + eps, T

    def __repr__(self):
        return f"Perturbed({self.base!r})"


# -- traces --------------------------------------------------------------------

@dataclass(frozen=True)
class TaskTrace:
    """Time-varying characteristics of one acyclic task."""

    task_index: int
    first_arrival: int
    source: object
    _arrivals: list = field(default_factory=list, init=False, repr=False, compare=False)
    _pairs: list = field(default_factory=list, init=False, repr=False, compare=False)

    @property
    def periodic(self) -> bool:
        return isinstance(self.source, Periodic)

    def chars(self, k: int) -> tuple[int, int]:
        """``(C, T)`` of instance ``k`` (1-based), validated."""
        if k <= len(self._pairs):
            return self._pairs[k - 1]
        while len(self._pairs) < k:
            j = len(self._pairs) + 1
            C, T = self.source.chars(j)
            if T <= 0 or C < 0 or C > T:
                raise InvalidTask(
                    f"task {self.task_index} instance {j}: need 0 <= C <= T and T > 0, "
                    f"got C={C}, T={T}"
                )
            self._pairs.append((C, T))
        return self._pairs[k - 1]

    def arrival(self, k: int) -> int:
        if self.periodic:
            return self.first_arrival + (k - 1) * self.source.T
        self._extend_to_index(k)
        return self._arrivals[k - 1]

    def instance(self, k: int) -> TaskInstance:
        C, T = self.chars(k)
        return TaskInstance(self.task_index, k, self.arrival(k), C, T)

    def _extend_to_index(self, k: int) -> None:
        arr = self._arrivals
        if not arr:
            arr.append(self.first_arrival)
        while len(arr) < k:
            arr.append(arr[-1] + self.chars(len(arr))[1])

    def _extend_past(self, t: int) -> None:
        arr = self._arrivals
        if not arr:
            arr.append(self.first_arrival)
        while arr[-1] < t:
            arr.append(arr[-1] + self.chars(len(arr))[1])

    def index_at(self, t: int, side: Side = Side.AT) -> int:
        """Index ``k`` of the instance effective at ``t`` (or ``t⁻``)."""
        if t < self.first_arrival or (side is Side.BEFORE and t == self.first_arrival):
            raise QueryBeforeFirstArrival(
                f"task {self.task_index}: t={t} precedes first arrival {self.first_arrival}"
            )
        if self.periodic:
            T = self.source.T
            d = t - self.first_arrival
            return d // T + 1 if side is Side.AT else (d - 1) // T + 1
        self._extend_past(t + 1)
        if side is Side.AT:
            return bisect.bisect_right(self._arrivals, t)
        return bisect.bisect_left(self._arrivals, t)


def effective_instance(trace: TaskTrace, t: int, side: Side = Side.AT) -> TaskInstance:
    """The unique instance with ``a <= t < a + T`` (``a < t <= a + T`` for ``t⁻``)."""
    return trace.instance(trace.index_at(t, side))


def characteristics_at(trace: TaskTrace, t: int, side: Side = Side.AT) -> tuple[int, int]:
    """``(C_n(t), T_n(t))``."""
    return trace.chars(trace.index_at(t, side))


@dataclass(frozen=True)
class TaskSet:
    """Tasks indexed 1..N; for fixed priority the index order is the priority order."""

    tasks: tuple

    def __post_init__(self):
        tasks = tuple(self.tasks)
        object.__setattr__(self, "tasks", tasks)
        idx = [tr.task_index for tr in tasks]
        if idx != list(range(1, len(tasks) + 1)):
            raise InvalidTask(f"task indices must be 1..N in order, got {idx}")

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, n: int) -> TaskTrace:
        """1-based access, matching task indices."""
        return self.tasks[n - 1]

    @classmethod
    def periodic(cls, pairs: Sequence[Sequence[int]], first_arrival: int = 0) -> "TaskSet":
        return cls(tuple(
            TaskTrace(n, first_arrival, Periodic(C, T)) for n, (C, T) in enumerate(pairs, 1)
        ))

    @classmethod
    def from_config(cls, tasks_cfg: Sequence[Mapping]) -> "TaskSet":
        """Build from a JSON-style list of per-task blocks.

        Each block: ``first_arrival_us``, ``mode`` (periodic | trace | perturbed)
        and ``C_us``/``T_us`` or ``instances`` (list of ``[C_us, T_us]``), plus
        for perturbed tasks ``perturbation: {dist, lo_us, hi_us, seed}``.
        """
        traces = []
        for n, blk in enumerate(tasks_cfg, 1):
            try:
                mode = blk.get("mode", "periodic")
                first = int(blk.get("first_arrival_us", 0))
                if mode == "trace":
                    src = Explicit(blk["instances"])
                else:
                    src = Periodic(blk["C_us"], blk["T_us"])
                    if mode == "perturbed":
                        pert = blk["perturbation"]
                        if pert.get("dist", "uniform") != "uniform":
                            raise InvalidConfig(f"task {n}: unsupported dist {pert['dist']!r}")
                        src = Perturbed(
                            src, UniformEpsilon(pert["lo_us"], pert["hi_us"], pert["seed"])
                        )
                    elif mode != "periodic":
                        raise InvalidConfig(f"task {n}: unknown mode {mode!r}")
            except KeyError as exc:
                raise InvalidConfig(f"task {n}: missing key {exc}") from None
            traces.append(TaskTrace(n, first, src))
        return cls(tuple(traces))
