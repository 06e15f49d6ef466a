"""Command-line front end: parameter solving, scenario runs, presets."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .analytics import InfeasibleError, TrafficClassParams, compute_ap_parameters
from .harness import (MODES, ScenarioSpec, emit_csv, experiment_preset,
                      run_scenario)

log = logging.getLogger("edcafair")


def _setup_logging():
    level = os.environ.get("EDCAFAIR_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _add_solve(sub):
    p = sub.add_parser("solve", help="compute AP parameters for a target "
                                     "downlink/uplink utilization ratio")
    p.add_argument("--n-uplink", type=int, required=True)
    p.add_argument("--n-downlink", type=int, required=True)
    p.add_argument("--u-r", type=float, default=None,
                   help="target ratio; default n_downlink/n_uplink")
    p.add_argument("--aifsn", type=int, default=2)
    p.add_argument("--cw-min", type=int, default=31)
    p.add_argument("--m", type=int, default=4,
                   help="backoff doubling stages (cw_max = 2^m (cw_min+1)-1)")
    p.add_argument("--retry-limit", type=int, default=7)
    p.add_argument("--txop", type=int, default=1,
                   help="uplink station TXOP packet budget")


def _add_run(sub):
    p = sub.add_parser("run", help="run a scenario across seeds, emit CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario JSON file")
    src.add_argument("--preset", type=int, choices=range(1, 8),
                     help="built-in experiment id")
    p.add_argument("--mode", choices=MODES, default="adaptive")
    p.add_argument("--seeds", type=int, default=3,
                   help="number of seeds (1..k)")
    p.add_argument("--scale", type=float, default=0.5,
                   help="flow-count/horizon scale, preset runs only")
    p.add_argument("--out", help="CSV output path")


def _add_preset(sub):
    p = sub.add_parser("preset", help="emit a built-in scenario as JSON")
    p.add_argument("--id", type=int, choices=range(1, 8), required=True)
    p.add_argument("--scale", type=float, default=0.5)
    p.add_argument("--out", help="file path; default stdout")


def _cmd_solve(args):
    tc = TrafficClassParams(aifsn=args.aifsn, cw_min=args.cw_min, m=args.m,
                            retry_limit=args.retry_limit, n_txop=args.txop)
    u_r = args.u_r if args.u_r is not None else args.n_downlink / args.n_uplink
    try:
        plan = compute_ap_parameters(tc, args.n_uplink, u_r)
    except (InfeasibleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"target utilization ratio : {u_r:.6g}")
    print(f"ap aifsn                 : {plan.aifsn}")
    print(f"ap cw_min (fractional)   : {plan.cw_min:.4f}")
    print(f"ap cw_min (rounded)      : {plan.rounded_cw_min}")
    print(f"ap n_txop                : {plan.n_txop}")
    return 0


def _cmd_run(args):
    if args.scenario:
        spec = ScenarioSpec.load(args.scenario)
    else:
        spec = experiment_preset(args.preset, args.scale)
    seeds = tuple(range(1, max(1, args.seeds) + 1))
    log.info("running %s mode=%s seeds=%s", spec.name, args.mode, seeds)
    report = run_scenario(spec, args.mode, seeds=seeds)
    for key in sorted(report.totals):
        transport, direction = key
        line = (f"{transport:4s} {direction:4s} "
                f"total {report.totals[key] / 1e6:8.3f} Mbps")
        if key in report.jain:
            line += f"  jain {report.jain[key]:.4f}"
        print(line)
    for transport in sorted({k[0] for k in report.totals}):
        up = report.totals.get((transport, "up"), 0.0)
        down = report.totals.get((transport, "down"), 0.0)
        if up > 0:
            print(f"{transport:4s} down/up ratio {down / up:.4f}")
    for ann in report.annotations:
        print(f"note: {ann}")
    if args.out:
        emit_csv(report, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_preset(args):
    spec = experiment_preset(args.id, args.scale)
    if args.out:
        spec.dump(args.out)
        print(f"wrote {args.out}")
    else:
        import json
        json.dump(spec.to_dict(), sys.stdout, indent=2)
        print()
    return 0


def main(argv=None):
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="edcafair",
        description="EDCA uplink/downlink weighted-fairness toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_solve(sub)
    _add_run(sub)
    _add_preset(sub)
    args = parser.parse_args(argv)
    return {"solve": _cmd_solve, "run": _cmd_run,
            "preset": _cmd_preset}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
