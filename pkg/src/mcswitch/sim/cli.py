"""Command line interface.

Exit codes: 0 success, 2 switching or planning infeasible, 3 numerical
failure, 4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, NumericalFailure, PlanningFailure, SwitchInfeasible
from .engine import format_sweep, run, summarize_events, sweep_na
from .scenario import feasibility, load
from .trace import plot_trace, read_csv, write_csv

EXIT_OK, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_CONFIG = 0, 2, 3, 4


def _summary(trace) -> list[str]:
    count, gmin, gmean = summarize_events(trace)
    ratio = float(np.max(trace.V / np.where(trace.V_d > 0, trace.V_d, np.inf))) if len(trace) else float("nan")
    lines = [
        f"rows           {len(trace)}",
        f"events         {count} after t=0" + (f"  (min gap {gmin * 1000:.0f} ms, mean {gmean * 1000:.1f} ms)"
                                              if count else ""),
        f"max V/V_d      {ratio:.6f}",
        f"final V        {trace.V[-1]:.6g}",
        f"final |e_q|    {np.linalg.norm(trace.e_q[-1]):.6g}",
    ]
    if trace.nav_windows:
        total = sum(b - a for a, b in trace.nav_windows)
        lines.append(f"navigation     {len(trace.nav_windows)} windows, {total:.3f} s total")
    return lines


def _write(trace, args, stem):
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = write_csv(trace, out / f"{stem}.csv")
        print(f"trace          {path}")
        if args.plot:
            for p in plot_trace(trace, out, stem):
                print(f"plot           {p}")


def cmd_run(args) -> int:
    sc = load(args.scenario)
    if args.na is not None:
        sc = sc.with_na(args.na)
    rep = feasibility(sc, samples=args.samples)
    print(f"u_u - mu_max   {rep.margin:.6g} ({'premise holds' if rep.premise_holds else 'premise NOT verified'})")
    trace = run(sc)
    print("\n".join(_summary(trace)))
    _write(trace, args, sc.name)
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = load(args.scenario)
    rows = sweep_na(sc, args.na)
    print(format_sweep(rows))
    if args.json:
        Path(args.json).write_text(json.dumps([r.__dict__ for r in rows], indent=2))
    return EXIT_OK


def cmd_feasibility(args) -> int:
    sc = load(args.scenario)
    print("\n".join(feasibility(sc, samples=args.samples).lines()))
    return EXIT_OK


def cmd_manip(args) -> int:
    from ..manipulation.loop import run_manipulation

    sc = load(args.scenario)
    rep = feasibility(sc, samples=args.samples)
    print(f"u_u - mu_max   {rep.margin:.6g} ({'premise holds' if rep.premise_holds else 'premise NOT verified'})")
    trace = run_manipulation(sc, no_delay=True if args.no_delay else None)
    print("\n".join(_summary(trace)))
    for rec in trace.meta["switches"]:
        print(f"  switch t={rec['t']:.3f}  delta_num={rec['delta_num']}  Delta={rec['Delta']:.2f} s")
    _write(trace, args, sc.name)
    return EXIT_OK


def cmd_plot(args) -> int:
    trace = read_csv(args.trace)
    out = Path(args.out) if args.out else Path(args.trace).parent
    for p in plot_trace(trace, out, Path(args.trace).stem):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcswitch", description="Event-triggered switching control of multi-channel systems")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario")
    r.add_argument("scenario")
    r.add_argument("--na", type=int, help="override the number of active channels")
    r.add_argument("--out", help="directory for the CSV trace")
    r.add_argument("--plot", action="store_true", help="also write SVG plots (needs --out)")
    r.add_argument("--samples", type=int, help="sphere samples for the span constants")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-na", help="event statistics for several n_a")
    s.add_argument("scenario")
    s.add_argument("--na", type=int, nargs="+", required=True)
    s.add_argument("--json", help="also write the table as JSON")
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("feasibility", help="span constants and the input bound mu_max")
    f.add_argument("scenario")
    f.add_argument("--samples", type=int)
    f.set_defaults(func=cmd_feasibility)

    m = sub.add_parser("manip", help="cooperative pushing with navigation delays")
    m.add_argument("scenario")
    m.add_argument("--no-delay", action="store_true", help="switch instantly (reference run)")
    m.add_argument("--out")
    m.add_argument("--plot", action="store_true")
    m.add_argument("--samples", type=int)
    m.set_defaults(func=cmd_manip)

    pl = sub.add_parser("plot", help="SVG plots from a CSV trace")
    pl.add_argument("trace")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SwitchInfeasible, PlanningFailure) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalFailure, AssertionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
