"""Command-line entry point.

Exit codes: 0 success, 1 invalid config, 2 schedulability failure
(``schedtest`` only), 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .battery import BatteryParams, BatteryState, default_params, integrate
from .engine import Policy
from .errors import CPSBError, InvalidConfig, NumericalError
from .harness import (
    TALLY_HEADER,
    battery_outputs,
    battery_stage,
    load_config,
    run_scenario,
    run_seed,
    schedule_outputs,
    schedule_stage,
    tallies,
    tally_rows,
    write_csv,
    write_manifest,
)
from .stability import beta, epsilon_lb, thresholds

EXIT_OK, EXIT_CONFIG, EXIT_UNSCHEDULABLE, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("cpsb")


def _policy(args):
    return Policy.parse(args.policy) if args.policy else None


def _params(path):
    if path is None:
        return default_params()
    if not Path(path).exists():
        raise InvalidConfig(f"battery parameter file not found: {path}")
    return BatteryParams.load(path)


def _stdout_csv(header, rows):
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def cmd_simulate(args):
    cfg = load_config(args.config)
    seed = run_seed(cfg, args.seed)
    stage = schedule_stage(cfg, seed, _policy(args))
    out = Path(args.out)
    files = schedule_outputs(stage, out)
    write_manifest(cfg, seed, out, files)
    print(f"{len(stage.sim.windows)} windows, {len(stage.sched.failures)} deadline misses -> {out}")
    return EXIT_OK


def cmd_schedtest(args):
    cfg = load_config(args.config)
    stage = schedule_stage(cfg, run_seed(cfg, args.seed), _policy(args))
    N = len(stage.sim.trace.segments)
    _stdout_csv(("w", "t_f_us", "t_end_us", *(f"ds{n}" for n in range(1, N + 1))),
                stage.sched.rows(stage.sim.windows))
    if stage.sched.schedulable:
        print("schedulable")
        return EXIT_OK
    first = stage.sched.failures[0]
    print(f"NOT schedulable: {len(stage.sched.failures)} misses, first task {first[0]} at {first[3]} us")
    return EXIT_UNSCHEDULABLE


def cmd_robustness(args):
    cfg = load_config(args.config)
    stage = schedule_stage(cfg, run_seed(cfg, args.seed), _policy(args))
    rob = stage.robustness
    if rob is None:
        raise InvalidConfig("no instance expires inside the window")
    _stdout_csv(("w", "t_end_us", "B_R_us"), rob.rows())
    print(f"B_R_us={rob.B_R} binding_window={rob.binding_window} "
          f"task={rob.binding_task} instance={rob.binding_instance}")
    return EXIT_OK


def cmd_thresholds(args):
    th = thresholds(_params(args.params))
    print(f"delta1={th.delta1!r}\ndelta2={th.delta2!r}")
    return EXIT_OK


def cmd_beta(args):
    p = _params(args.params)
    print(f"beta={float(beta(args.x2, args.x3, args.current, p, args.x1))!r}")
    print(f"epsilon={float(epsilon_lb(args.x2, args.x3, p, args.x1))!r}")
    return EXIT_OK


def cmd_battery_run(args):
    p = _params(args.params).with_f2(args.f2)
    traj = integrate(BatteryState(args.x1), args.current, 0.0, args.duration, args.h, p)
    out = Path(args.out)
    write_csv(out / "battery.csv", ("t_s", "x1", "x2_V", "x3_V", "y_V", "i_A"), traj.rows())
    print(f"x1 {traj.x1[0]:.6f} -> {traj.x1[-1]:.6f}, y {traj.y[0]:.4f} V -> {traj.y[-1]:.4f} V")
    return EXIT_OK


def _progress(res):
    log.info("cycle %d (f2=%.2f): %s", res.cycle, res.f2,
             ", ".join(f"{k}={v.value}" for k, v in res.outcomes.items()))


def cmd_compare_switching(args):
    cfg = load_config(args.config)
    if "battery" not in cfg:
        raise InvalidConfig("config has no battery block")
    seed = run_seed(cfg, args.seed)
    results = battery_stage(cfg, seed, _policy(args), _progress, args.jobs)
    if args.out:
        out = Path(args.out)
        write_manifest(cfg, seed, out, battery_outputs(results, out))
    _stdout_csv(TALLY_HEADER, tally_rows(tallies(results)))
    return EXIT_OK


def cmd_run_scenario(args):
    cfg = load_config(args.config)
    rep = run_scenario(cfg, args.out, args.seed, _policy(args), _progress, args.jobs)
    if rep.schedule is not None:
        s = rep.schedule
        verdict = "schedulable" if s.sched.schedulable else f"{len(s.sched.failures)} misses"
        br = "n/a" if s.robustness is None else f"{s.robustness.B_R} us"
        print(f"window: {verdict}, B_R = {br}")
    if rep.tallies:
        _stdout_csv(TALLY_HEADER, tally_rows(rep.tallies))
    print(f"artifacts -> {rep.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cpsb", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario(name, func, help, out_required=False):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", required=True, help="scenario JSON file")
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--policy", choices=["rms", "edf"], help="override the scheduling policy")
        sp.set_defaults(func=func, jobs=1)
        return sp

    scenario("simulate", cmd_simulate, "mode trace and window states", out_required=True)
    scenario("schedtest", cmd_schedtest, "per-window schedulability verdicts")
    scenario("robustness", cmd_robustness, "robustness margin per window")
    for sp in (scenario("compare-switching", cmd_compare_switching, "DR/FAR/MDR per strategy"),
               scenario("run-scenario", cmd_run_scenario, "every stage, artifacts to --out",
                        out_required=True)):
        sp.add_argument("--jobs", type=int, default=1, help="discharge cycles run in parallel")

    sp = sub.add_parser("thresholds", help="static SoC thresholds")
    sp.add_argument("--params", help="battery parameter JSON (default: bundled)")
    sp.set_defaults(func=cmd_thresholds)

    sp = sub.add_parser("beta", help="adaptive threshold and current bound")
    sp.add_argument("--params")
    sp.add_argument("--x1", type=float, required=True, help="SoC at which circuit values are frozen")
    sp.add_argument("--x2", type=float, required=True)
    sp.add_argument("--x3", type=float, required=True)
    sp.add_argument("--current", type=float, required=True, help="discharge current [A]")
    sp.set_defaults(func=cmd_beta)

    sp = sub.add_parser("battery-run", help="constant-current discharge trajectory")
    sp.add_argument("--params")
    sp.add_argument("--current", type=float, default=1.0)
    sp.add_argument("--duration", type=float, default=600.0, help="seconds")
    sp.add_argument("--h", type=float, default=0.1, help="step [s]")
    sp.add_argument("--x1", type=float, default=1.0, help="initial SoC")
    sp.add_argument("--f2", type=float, default=1.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_battery_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical error [{exc.stage}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CPSBError, KeyError, TypeError, ValueError) as exc:
        stage = getattr(exc, "stage", "config")
        print(f"invalid input [{stage}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
