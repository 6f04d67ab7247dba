"""End-to-end scenario: schedule -> load current -> battery -> estimator -> switching.

The processor draws ``i_p1 = base + delta * Phi_cpu`` where ``Phi_cpu`` is 1
while any task is not free; the actuators draw ``P * sum |u_j|``; a second
processor draws a constant. Optionally every deadline miss adds a
rectangular current pulse (a disturbance that the late controller must
correct with a large actuation).

A scenario config is a JSON document; see ``data/*.json`` for examples.
"""

from __future__ import annotations

import bisect
import copy
import csv
import hashlib
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .battery import (
    BatteryParams,
    BatteryState,
    PiecewiseCurrent,
    circuit_values,
    default_params,
    integrate,
    output_voltage,
)
from .engine import Mode, ModeTrace, Policy, SchedState, simulate, state_at
from .errors import (
    CPSBError,
    InvalidConfig,
    InvalidRegime,
    NumericalError,
    SingularCapacitance,
    WeightCollapse,
)
from .estimator import FilterNoise, ParticleFilter
from .robustness import robustness_measure
from .schedulability import report_from
from .stability import beta, thresholds
from .switching import (
    Criteria,
    Outcome,
    StrategyRun,
    at_decide,
    classify,
    ct_decide,
    tally,
    vt_decide,
)
from .tasks import US_PER_S, TaskSet

log = logging.getLogger(__name__)

STRATEGIES = ("VT", "CT", "AT")


def derive_seed(*keys: int) -> int:
    """Independent 32-bit seed for a labelled stream."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


# -- load model ------------------------------------------------------------------

class StepTrace:
    """Piecewise-constant signal over integer µs, right-continuous."""

    def __init__(self, times, values):
        self.times = [int(t) for t in times]
        self.values = [float(v) for v in values]
        if not self.times or len(self.times) != len(self.values):
            raise InvalidConfig("step trace needs equal, nonempty times and values")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise InvalidConfig("step trace times must increase")

    def __call__(self, t: int) -> float:
        j = bisect.bisect_right(self.times, t) - 1
        if j < 0:
            raise InvalidConfig(f"step trace queried at {t} before its start")
        return self.values[j]


@dataclass(frozen=True)
class LoadModel:
    P: float = 0.1  # A per unit of |u|
    i_p1_base: float = 0.3
    i_p1_active_delta: float = 0.1
    i_p2: float = 0.3
    u_traces: tuple = ()  # StepTrace of |u_j| per controller

    def __post_init__(self):
        if min(self.P, self.i_p1_base, self.i_p1_active_delta, self.i_p2) < 0:
            raise InvalidConfig("load model currents must be nonnegative")

    @classmethod
    def from_config(cls, blk: dict, u_traces=()) -> "LoadModel":
        return cls(
            float(blk.get("P", 0.1)),
            float(blk.get("i_p1_base_A", 0.3)),
            float(blk.get("i_p1_active_A", 0.1)),
            float(blk.get("i_p2_A", 0.3)),
            tuple(u_traces),
        )


def cpu_activity(trace: ModeTrace, t: int) -> int:
    return int(any(trace.mode_at(n, t) is not Mode.FREE for n in range(1, len(trace.segments) + 1)))


def load_current(lm: LoadModel, trace: ModeTrace, t: int) -> float:
    u = sum(abs(tr(t)) for tr in lm.u_traces)
    return lm.P * u + lm.i_p1_base + lm.i_p1_active_delta * cpu_activity(trace, t) + lm.i_p2


def busy_intervals(trace: ModeTrace) -> np.ndarray:
    """Maximal intervals ``[a, b)`` where some task is not free, shape (k, 2)."""
    ev = [(a, 1) for segs in trace.segments for a, b, m in segs if m is not Mode.FREE]
    ev += [(b, -1) for segs in trace.segments for a, b, m in segs if m is not Mode.FREE]
    if not ev:
        return np.empty((0, 2), dtype=np.int64)
    ev = np.array(ev, dtype=np.int64)
    times, inv = np.unique(ev[:, 0], return_inverse=True)
    level = np.cumsum(np.bincount(inv, weights=ev[:, 1]).astype(np.int64))
    busy = level > 0
    prev = np.concatenate(([False], busy[:-1]))
    starts = times[busy & ~prev]
    ends = times[~busy & prev]
    return np.column_stack((starts, ends))


class ScheduleLoad:
    """Streams the load waveform of a running schedule, chunk by chunk.

    Each chunk simulates the task set, derives ``Phi_cpu`` from the mode
    trace, redraws a synthetic control signal at the deadline of every
    instance that completed in time and attaches a pulse to every miss.
    """

    def __init__(self, ts: TaskSet, policy: Policy, lm: LoadModel, u_cfg: dict | None = None,
                 spikes: dict | None = None, seed: int = 0, t0: int = 0,
                 initial: SchedState | None = None):
        self.ts, self.policy, self.lm = ts, policy, lm
        self.t = t0
        self.state = initial
        u_cfg = u_cfg or {}
        self.synthetic = u_cfg.get("mode", "synthetic") == "synthetic" and not lm.u_traces
        if self.synthetic:
            self.u_max = float(u_cfg.get("u_max", 1.0))
            self.rngs = [np.random.default_rng(derive_seed(seed, 7, n)) for n in range(1, len(ts) + 1)]
            self.u_log = [([t0], [float(r.uniform(0, self.u_max))]) for r in self.rngs]
        self.spike_A = float(spikes["amplitude_A"]) if spikes else 0.0
        self.spike_us = int(spikes["duration_us"]) if spikes else 0
        self.spikes: list = []  # (start, end) pulses still relevant
        self.misses: list = []  # (task, deadline)

    def _u_sum(self, t: np.ndarray) -> np.ndarray:
        if not self.synthetic:
            return np.array([sum(abs(tr(int(x))) for tr in self.lm.u_traces) for x in t])
        total = np.zeros(len(t))
        for times, vals in self.u_log:
            total += np.asarray(vals)[np.searchsorted(times, t, side="right") - 1]
        return total

    def _u_breaks(self, t0: int, t1: int) -> list:
        if self.synthetic:
            return [x for times, _ in self.u_log for x in times if t0 < x < t1]
        return [x for tr in self.lm.u_traces for x in tr.times if t0 < x < t1]

    def chunk(self, t1: int):
        """Waveform on ``[self.t, t1)`` as ``(times_us, amps)`` plus the schedule run."""
        t0, lm = self.t, self.lm
        sim = simulate(self.ts, t0, t1, self.policy, self.state)
        self.state = sim.final
        for rec in sim.windows:
            for i, q in enumerate(rec.end.q):
                if q != 0:
                    continue
                if rec.C[i] <= rec.end.s[i]:
                    if self.synthetic:
                        times, vals = self.u_log[i]
                        times.append(rec.t_end)
                        vals.append(float(self.rngs[i].uniform(0, self.u_max)))
                else:
                    self.misses.append((i + 1, rec.t_end))
                    if self.spike_A:
                        self.spikes.append((rec.t_end, rec.t_end + self.spike_us))

        busy = busy_intervals(sim.trace)
        sp = np.array(self.spikes, dtype=np.int64).reshape(-1, 2)
        cand = np.concatenate(([t0], busy.ravel(), sp.ravel(), self._u_breaks(t0, t1)))
        t = np.unique(cand[(cand >= t0) & (cand < t1)].astype(np.int64))

        cpu = np.zeros(len(t), dtype=bool)
        if len(busy):
            j = np.searchsorted(busy[:, 0], t, side="right") - 1
            cpu = (j >= 0) & (t < busy[np.maximum(j, 0), 1])
        n_sp = (np.searchsorted(np.sort(sp[:, 0]), t, side="right")
                - np.searchsorted(np.sort(sp[:, 1]), t, side="right"))
        amps = (lm.P * self._u_sum(t) + lm.i_p1_base + lm.i_p1_active_delta * cpu
                + lm.i_p2 + self.spike_A * n_sp)
        keep = np.concatenate(([True], np.diff(amps) != 0))

        # forget history that can no longer matter
        self.spikes = [s for s in self.spikes if s[1] > t1]
        if self.synthetic:
            for times, vals in self.u_log:
                k = bisect.bisect_right(times, t1) - 1
                del times[:k], vals[:k]
        self.t = t1
        return t[keep], amps[keep], sim

    def segment(self, t0: float, t1: float) -> PiecewiseCurrent:
        """Battery-side view in seconds; chunks must be requested in order."""
        t0_us, t1_us = round(t0 * US_PER_S), round(t1 * US_PER_S)
        if t0_us != self.t:
            raise ValueError(f"chunks out of order: expected start {self.t}, got {t0_us}")
        times, amps, _ = self.chunk(t1_us)
        return PiecewiseCurrent(times / US_PER_S, amps)


class ConstantLoad:
    def __init__(self, amps: float):
        if amps < 0:
            raise InvalidConfig("load current must be nonnegative")
        self.amps = float(amps)
        self.misses: list = []

    def segment(self, t0: float, t1: float) -> PiecewiseCurrent:
        return PiecewiseCurrent([t0], [self.amps])


# -- one discharge cycle ---------------------------------------------------------

def interval_means(traj, p: BatteryParams, t0: float, h: float):
    """Mean terminal voltage and current over each complete ``h`` interval of
    a dense trajectory starting at ``t0``, plus the node index of each
    interval end."""
    t = traj.t
    n = int(np.floor((t[-1] - t0) / h + 1e-9))
    if n == 0:
        return np.empty(0), np.empty(0), np.empty(0, dtype=int)
    edges = t0 + h * np.arange(n + 1)
    idx = np.searchsorted(t, edges - 1e-9 * h)
    if np.any(np.abs(t[idx] - edges) > 1e-6 * h):
        raise NumericalError("sampling instants are not integration nodes")
    last = idx[-1]
    cv = circuit_values(traj.x1[: last + 1], p)
    v = cv.E_o - traj.x2[: last + 1] - traj.x3[: last + 1]
    dt = np.diff(t[: last + 1])
    i = traj.i[:last]
    y_area = (0.5 * (v[:-1] + v[1:]) - 0.5 * i * (cv.R_s[:-1] + cv.R_s[1:])) * dt
    ybar = np.add.reduceat(y_area, idx[:-1]) / h
    ibar = np.add.reduceat(i * dt, idx[:-1]) / h
    return ybar, ibar, idx[1:]


@dataclass(frozen=True)
class FilterConfig:
    M: int = 1000
    h: float = 0.1
    noise: FilterNoise = FilterNoise()
    prior_std: tuple = (0.0, 0.0, 0.0)

    @classmethod
    def from_config(cls, blk: dict) -> "FilterConfig":
        noise = FilterNoise(
            tuple(blk.get("process_std", FilterNoise.process)),
            float(blk.get("measurement_std_V", FilterNoise.measurement)),
        )
        return cls(int(blk.get("M", 1000)), float(blk.get("h_s", 0.1)), noise,
                   tuple(blk.get("prior_std", (0.0, 0.0, 0.0))))


@dataclass(frozen=True)
class SwitchConfig:
    vt_threshold: float = 3.5
    ct_threshold: float = 0.1
    fa_voltage: float = 3.6
    miss_drop: float = 0.33

    @classmethod
    def from_config(cls, blk: dict) -> "SwitchConfig":
        return cls(
            float(blk.get("vt_threshold_V", 3.5)),
            float(blk.get("ct_threshold", 0.1)),
            float(blk.get("fa_voltage_V", 3.6)),
            float(blk.get("miss_drop", 0.33)),
        )


@dataclass
class CycleResult:
    cycle: int
    f2: float
    load: str
    runs: dict  # strategy -> StrategyRun
    outcomes: dict  # strategy -> Outcome
    end_reason: str  # all-triggered | depleted | weight-collapse | time-limit
    t_end: float
    delta2: float
    deadline_misses: int = 0
    samples: list = field(default_factory=list, repr=False)

    @property
    def at_margin(self) -> float | None:
        """``x1_hat - delta2`` at the adaptive switch."""
        run = self.runs.get("AT")
        return None if run is None or not run.triggered else run.x1_hat - self.delta2


SAMPLE_HEADER = ("t_s", "i_A", "y_meas_V", "x1_true", "x1_hat", "x2_hat_V", "x3_hat_V", "var_x1", "beta")


def run_cycle(
    p_base: BatteryParams,
    f2: float,
    load,
    filt: FilterConfig,
    sw: SwitchConfig,
    seed: int,
    cycle: int = 0,
    x1_0: float = 1.0,
    chunk_s: float = 20.0,
    max_time_s: float = 50_000.0,
    check: bool = True,
    label: str = "",
) -> CycleResult:
    """Discharge one battery under ``load`` and score every strategy on it.

    The terminal voltage is averaged over each sampling interval and
    corrupted with Gaussian noise; the filter sees that and the interval-mean
    current. All strategies watch the same discharge, which continues until
    every one of them has triggered or the battery model breaks down.
    """
    p = p_base.with_f2(f2)
    d2 = thresholds(p).delta2
    h = filt.h
    crit = Criteria(output_voltage(BatteryState(1.0), 0.0, p_base.with_f2(1.0)),
                    sw.vt_threshold, sw.ct_threshold, sw.fa_voltage, sw.miss_drop)
    pf = ParticleFilter(p, BatteryState(x1_0), filt.prior_std, filt.M,
                        derive_seed(seed, 11, cycle), filt.noise, h)
    mrng = np.random.default_rng(derive_seed(seed, 13, cycle))
    state = BatteryState(x1_0)
    runs: dict = {}
    rows = []
    k, c = 0, 0
    reason = None
    while reason is None:
        t0, t1 = c * chunk_s, (c + 1) * chunk_s
        cur = load.segment(t0, t1)
        depleted = False
        try:
            traj = integrate(state, cur, t0, t1, h, p, check=check, dense=True)
        except SingularCapacitance as exc:
            traj, depleted = exc.partial, True
        ybar, ibar, ends = interval_means(traj, p, t0, h)
        for j in range(len(ybar)):
            k += 1
            tk = t0 + (j + 1) * h
            y_m = float(ybar[j] + mrng.normal() * filt.noise.measurement)
            i_m = float(ibar[j])
            try:
                est = pf.step(y_m, i_m)
            except WeightCollapse as exc:
                log.warning("cycle %d: %s", cycle, exc)
                reason = "weight-collapse"
                break
            x1h, x2h, x3h = est.x_hat
            x1t = float(traj.x1[ends[j]])

            def hit(name):
                runs[name] = StrategyRun(name, tk, y_m, x1h, x1t)

            if "VT" not in runs and vt_decide(y_m, sw.vt_threshold):
                hit("VT")
            if "CT" not in runs and ct_decide(x1h, sw.ct_threshold):
                hit("CT")
            b = ""
            if "AT" not in runs:
                try:
                    if at_decide(est, i_m, k, h, p).S:
                        hit("AT")
                except InvalidRegime as exc:
                    log.warning("cycle %d: adaptive threshold undefined: %s", cycle, exc)
            try:
                b = float(beta(x2h, x3h, i_m, p, x1h))
            except CPSBError:
                pass
            rows.append((tk, i_m, y_m, x1t, x1h, x2h, x3h, est.var[0], b))
            if len(runs) == len(STRATEGIES):
                reason = "all-triggered"
                break
        if reason is None:
            if depleted:
                reason = "depleted"
            elif t1 >= max_time_s:
                reason = "time-limit"
        state = traj.state(len(traj) - 1)
        c += 1
    runs = {name: runs.get(name, StrategyRun(name)) for name in STRATEGIES}
    outcomes = {name: classify(run, crit) for name, run in runs.items()}
    t_end = rows[-1][0] if rows else 0.0
    return CycleResult(cycle, f2, label, runs, outcomes, reason, t_end, d2,
                       len(load.misses), rows)


# -- configuration ---------------------------------------------------------------

def load_config(path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError:
        raise InvalidConfig(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InvalidConfig(f"{path}: top level must be an object")
    cfg["_base_dir"] = str(path.resolve().parent)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    if "tasks" in cfg:
        if not cfg["tasks"]:
            raise InvalidConfig("empty task list")
        TaskSet.from_config(cfg["tasks"])
        Policy.parse(cfg.get("policy", "rms"))
    win = cfg.get("window")
    if win is not None:
        if int(win["t_a_us"]) >= int(win["t_b_us"]):
            raise InvalidConfig("analysis window is empty")
        if int(win.get("origin_us", 0)) > int(win["t_a_us"]):
            raise InvalidConfig("origin after window start")
    if "battery" in cfg:
        battery_params(cfg)
        f2s = cfg["battery"].get("f2_schedule", [1.0])
        if not f2s or any(not 0 < f <= 1 for f in f2s):
            raise InvalidConfig("f2 schedule values must lie in (0, 1]")
        load = cfg.get("load", {})
        if load.get("mode", "schedule") == "constant":
            amps = load.get("constant_A")
            if not amps or len(amps) != len(f2s):
                raise InvalidConfig("constant_A needs one current per cycle")
        elif "tasks" not in cfg:
            raise InvalidConfig("schedule-driven load needs a task set")


def battery_params(cfg: dict) -> BatteryParams:
    ref = cfg.get("battery", {}).get("params", "default")
    if ref == "default":
        return default_params()
    path = Path(cfg.get("_base_dir", ".")) / ref
    if not path.exists():
        raise InvalidConfig(f"battery parameter file not found: {path}")
    return BatteryParams.load(path)


def task_set(cfg: dict, seed: int, cycle: int = 0, nominal: bool = False) -> TaskSet:
    """Task set of one cycle; perturbation seeds are mixed with the run seed
    and cycle index so every cycle sees a fresh realization."""
    blocks = copy.deepcopy(cfg["tasks"])
    for n, blk in enumerate(blocks, 1):
        if blk.get("mode") == "perturbed":
            if nominal:
                blk["mode"] = "periodic"
            else:
                pert = blk["perturbation"]
                pert["seed"] = derive_seed(pert.get("seed", n), seed, cycle)
    return TaskSet.from_config(blocks)


def run_seed(cfg: dict, override: int | None = None) -> int:
    return int(cfg.get("seed", 0) if override is None else override)


def config_hash(cfg: dict) -> str:
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    return hashlib.sha256(json.dumps(clean, sort_keys=True).encode()).hexdigest()


def _window(cfg):
    win = cfg["window"]
    return int(win["t_a_us"]), int(win["t_b_us"]), int(win.get("origin_us", 0))


def _load_model(cfg) -> LoadModel:
    blk = cfg.get("load", {})
    u = blk.get("u", {})
    traces = ()
    if u.get("mode") == "traces":
        traces = tuple(StepTrace(*zip(*tr)) for tr in u["traces"])
    return LoadModel.from_config(blk, traces)


# -- stages ----------------------------------------------------------------------

@dataclass
class ScheduleStage:
    sim: object
    sched: object
    robustness: object  # RobustnessReport | None
    load: tuple  # (times_us, amps)
    initial: SchedState


def schedule_stage(cfg: dict, seed: int, policy: Policy | None = None) -> ScheduleStage:
    from .errors import NoExpiryInRange

    policy = policy or Policy.parse(cfg.get("policy", "rms"))
    t_a, t_b, origin = _window(cfg)
    ts = task_set(cfg, seed)
    init = state_at(ts, t_a, policy, origin)
    sl = ScheduleLoad(ts, policy, _load_model(cfg), cfg.get("load", {}).get("u"),
                      cfg.get("load", {}).get("spikes"), derive_seed(seed, 5, 0), t_a, init)
    times, amps, sim = sl.chunk(t_b)
    nominal = task_set(cfg, seed, nominal=True)
    try:
        rob = robustness_measure(nominal, t_a, t_b, policy, state_at(nominal, t_a, policy, origin))
    except NoExpiryInRange:
        rob = None
    return ScheduleStage(sim, report_from(sim), rob, (times, amps), init)


def _cycle(cfg: dict, seed: int, policy: Policy, c: int) -> CycleResult:
    p = battery_params(cfg)
    bat = cfg["battery"]
    f2 = float(bat.get("f2_schedule", [1.0])[c])
    load_cfg = cfg.get("load", {})
    if load_cfg.get("mode", "schedule") == "constant":
        amps = float(load_cfg["constant_A"][c])
        load, label = ConstantLoad(amps), f"constant {amps:g} A"
    else:
        load = ScheduleLoad(task_set(cfg, seed, c), policy, _load_model(cfg),
                            load_cfg.get("u"), load_cfg.get("spikes"), derive_seed(seed, 5, c))
        label = "schedule"
    return run_cycle(p, f2, load, FilterConfig.from_config(cfg.get("filter", {})),
                     SwitchConfig.from_config(cfg.get("switching", {})), seed, c,
                     float(bat.get("initial_soc", 1.0)), float(load_cfg.get("chunk_s", 20.0)),
                     float(bat.get("max_time_s", 50_000.0)), bool(bat.get("check", True)), label)


def battery_stage(cfg: dict, seed: int, policy: Policy | None = None, progress=None,
                  jobs: int = 1) -> list:
    """One discharge cycle per ``f2_schedule`` entry. Cycles share no state,
    so ``jobs > 1`` runs them in worker processes with identical results."""
    policy = policy or Policy.parse(cfg.get("policy", "rms"))
    n = len(cfg["battery"].get("f2_schedule", [1.0]))
    if jobs <= 1:
        results = []
        for c in range(n):
            results.append(_cycle(cfg, seed, policy, c))
            if progress:
                progress(results[-1])
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_cycle, cfg, seed, policy, c) for c in range(n)]
        results = []
        for fut in futures:
            results.append(fut.result())
            if progress:
                progress(results[-1])
    return results


def tallies(results) -> dict:
    return {name: tally(r.outcomes[name] for r in results) for name in STRATEGIES}


# -- outputs ---------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (Outcome, Mode)):
        return v.value
    return v


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def schedule_outputs(stage: ScheduleStage, out: Path) -> list:
    N = len(stage.sim.trace.segments)
    written = []

    def emit(name, header, rows):
        write_csv(out / name, header, rows)
        written.append(name)

    emit("modes.csv", ("task", "t_start_us", "t_end_us", "mode"), stage.sim.trace.rows())
    qs = tuple(f"q{n}_us" for n in range(1, N + 1))
    ss = tuple(f"s{n}_us" for n in range(1, N + 1))
    emit("windows.csv", ("w", "t_f_us", "L_f_us", *qs, *ss), stage.sim.window_rows())
    emit("schedtest.csv", ("w", "t_f_us", "t_end_us", *(f"ds{n}" for n in range(1, N + 1))),
         stage.sched.rows(stage.sim.windows))
    if stage.robustness is not None:
        emit("robustness.csv", ("w", "t_end_us", "B_R_us"), stage.robustness.rows())
    times, amps = stage.load
    emit("load_current.csv", ("t_start_us", "i_tot_A"), zip(times.tolist(), amps.tolist()))
    return written


SWITCH_HEADER = ("cycle", "f2", "load", "strategy", "t_switch_s", "y_meas_V", "x1_hat",
                 "x1_true", "outcome", "end_reason")


def switching_rows(results):
    for r in results:
        for name in STRATEGIES:
            run = r.runs[name]
            yield (r.cycle, r.f2, r.load, name,
                   "" if run.t is None else run.t, "" if run.y is None else run.y,
                   "" if run.x1_hat is None else run.x1_hat,
                   "" if run.x1_true is None else run.x1_true,
                   r.outcomes[name].value, r.end_reason)


def tally_rows(tals: dict):
    for name, t in tals.items():
        yield name, t.T, t.H, t.F, t.M, t.DR, t.FAR, t.MDR


TALLY_HEADER = ("strategy", "T", "H", "F", "M", "DR", "FAR", "MDR")


def battery_outputs(results, out: Path, samples: bool = True) -> list:
    written = []
    if samples:
        for r in results:
            name = f"cycle_{r.cycle:02d}.csv"
            write_csv(out / name, SAMPLE_HEADER, r.samples)
            written.append(name)
    write_csv(out / "switching.csv", SWITCH_HEADER, switching_rows(results))
    write_csv(out / "tally.csv", TALLY_HEADER, tally_rows(tallies(results)))
    return written + ["switching.csv", "tally.csv"]


def write_manifest(cfg: dict, seed: int, out: Path, files, extra=None) -> None:
    manifest = {
        "config_hash": config_hash(cfg),
        "config_name": cfg.get("name", ""),
        "seed": seed,
        "versions": {"cpsb": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "files": sorted(files),
    }
    manifest.update(extra or {})
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@dataclass
class ScenarioReport:
    schedule: ScheduleStage | None
    cycles: list
    tallies: dict
    out: Path | None


def run_scenario(cfg: dict, out=None, seed: int | None = None, policy: Policy | None = None,
                 progress=None, jobs: int = 1) -> ScenarioReport:
    """Every stage the config describes; artifacts go to ``out`` when given."""
    seed = run_seed(cfg, seed)
    out = Path(out) if out is not None else None
    files = []
    stage = None
    if "tasks" in cfg and "window" in cfg:
        stage = schedule_stage(cfg, seed, policy)
        if out is not None:
            files += schedule_outputs(stage, out)
    cycles, tals = [], {}
    if "battery" in cfg:
        cycles = battery_stage(cfg, seed, policy, progress, jobs)
        tals = tallies(cycles)
        if out is not None:
            files += battery_outputs(cycles, out)
    if out is not None:
        extra = {}
        if stage is not None:
            extra["schedulable"] = stage.sched.schedulable
            if stage.robustness is not None:
                extra["B_R_us"] = stage.robustness.B_R
        write_manifest(cfg, seed, out, files, extra)
    return ScenarioReport(stage, cycles, tals, out)
