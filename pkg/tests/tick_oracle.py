"""Tick-level preemptive uniprocessor simulator used as a test oracle.

It shares no code with the analytical engine: it advances one microsecond at
a time, keeps per-job remaining work, and derives modes from which job holds
the CPU. Unfinished jobs are dropped at their deadline (the next instance
arrives there).
"""

from dataclasses import dataclass, field

FREE, PREEMPTED, EXECUTING = 0.0, 0.5, 1.0


@dataclass
class TickResult:
    segments: list  # per task: [(start, end, mode)]
    misses: set  # (task, deadline)
    remaining: dict = field(default_factory=dict)  # t -> remaining work at t⁻


def tick_simulate(instances, t_a, t_b, edf=False, query_times=()):
    """``instances[i]`` lists ``(C, T)`` pairs of task ``i+1``; all arrive first at ``t_a``."""
    N = len(instances)
    rem = [0] * N
    dl = [t_a] * N
    nxt = [0] * N
    started = [False] * N
    misses = set()
    remaining = {}
    queries = set(query_times)
    segments = [[] for _ in range(N)]
    cur_modes = [None] * N
    seg_start = [t_a] * N

    def prio(i):
        return (dl[i], i) if edf else i

    run = None
    dirty = True
    next_arrival = t_a
    for t in range(t_a, t_b):
        if t in queries:
            remaining[t] = tuple(rem)
        if t == next_arrival:
            for i in range(N):
                if dl[i] == t:
                    if started[i] and rem[i] > 0:
                        misses.add((i + 1, t))
                    C, T = instances[i][nxt[i]]
                    nxt[i] += 1
                    started[i] = True
                    rem[i] = C
                    dl[i] = t + T
            next_arrival = min(dl)
            dirty = True
        if dirty:
            ready = [i for i in range(N) if rem[i] > 0]
            run = min(ready, key=prio) if ready else None
            for i in range(N):
                if i == run:
                    m = EXECUTING
                elif run is not None and prio(run) < prio(i):
                    m = PREEMPTED
                else:
                    m = FREE
                if m != cur_modes[i]:
                    if cur_modes[i] is not None and t > seg_start[i]:
                        segments[i].append((seg_start[i], t, cur_modes[i]))
                    cur_modes[i] = m
                    seg_start[i] = t
            dirty = False
        if run is not None:
            rem[run] -= 1
            if rem[run] == 0:
                dirty = True
    if t_b in queries:
        remaining[t_b] = tuple(rem)
    for i in range(N):
        if dl[i] == t_b and rem[i] > 0:
            misses.add((i + 1, t_b))
        if t_b > seg_start[i]:
            segments[i].append((seg_start[i], t_b, cur_modes[i]))
    return TickResult(segments, misses, remaining)

