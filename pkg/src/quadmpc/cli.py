"""Command line: ``quadmpc run|sweep|validate``.

Exit codes: 0 success, 2 configuration error, 3 simulation abort.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path

from quadmpc import config as cfgmod
from quadmpc.export import metrics_row, write_json, write_metrics, write_sweep, write_trace
from quadmpc.sim import SimulationAbort, run_closed_loop, sweep_time_optimal

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config (defaults when omitted)")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config entry, repeatable")
    common.add_argument("--seedless", action="store_true",
                        help="document that no random numbers are used (always true)")
    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", metavar="DIR", default="out", help="output directory")

    ap = argparse.ArgumentParser(prog="quadmpc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common, out], help="simulate one scenario")
    sw = sub.add_parser("sweep", parents=[common, out], help="LQR, MPC and IMPC over t_o values")
    sw.add_argument("--t-o", dest="t_o", default="1,2,2.4,5,10", metavar="LIST",
                    help="comma separated t_o values")
    sw.add_argument("--jobs", type=int, default=os.cpu_count() or 1, metavar="N",
                    help="parallel sweep rows")
    sub.add_parser("validate", parents=[common], help="check and print the effective config")
    return ap


def _err(msg: str) -> None:
    print(f"quadmpc: {msg}", file=sys.stderr)


def _load(args):
    try:
        return cfgmod.load(args.config, args.overrides)
    except cfgmod.ConfigError as exc:
        for key, msg in exc.problems:
            _err(f"config error at {key}: {msg}")
        return None


def parse_t_o(text: str) -> list[float]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("empty t_o list")
    values = [float(s) for s in items]
    if any(not v > 0 for v in values):
        raise ValueError("t_o values must be positive")
    return values


def _fmt_time(t) -> str:
    return "-" if t is None else f"{t:.2f}"


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", label).strip("_")


def cmd_run(args) -> int:
    loaded = _load(args)
    if loaded is None:
        return EXIT_CONFIG
    raw, ex = loaded
    out = Path(args.out)
    write_json(out / "config.json", raw)
    try:
        m = run_closed_loop(ex.scenario, ex.controller, ex.time_opt, ex.weights, ex.horizon,
                            ex.bounds, ex.quad, ex.threshold)
    except SimulationAbort as exc:
        write_trace(out / "trace.csv", exc.trace)
        _err(f"simulation aborted: {exc}")
        return EXIT_ABORT
    write_trace(out / "trace.csv", m.trace)
    t_o = ex.time_opt.t_o if ex.controller.mode.time_optimal else None
    write_metrics(out / "metrics.csv", [metrics_row(m.label, m, t_o)])
    if ex.plots:
        from quadmpc.plotting import plot_errors, plot_inputs
        plot_errors(m.trace, out / "errors.svg", m.label)
        plot_inputs(m.trace, out / "inputs.svg", m.label)
    print(f"mode         {m.label}")
    print("total error  x={:.3f} y={:.3f} z={:.3f}".format(*m.total_err))
    print("min error    x={:.5f} y={:.5f} z={:.5f}".format(*m.min_err))
    print(f"flight time  {_fmt_time(m.flight_time)}")
    print(f"outputs in   {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        t_o = parse_t_o(args.t_o)
    except ValueError as exc:
        _err(f"bad --t-o value {args.t_o!r}: {exc}")
        return EXIT_CONFIG
    if args.jobs < 1:
        _err("--jobs must be at least 1")
        return EXIT_CONFIG
    loaded = _load(args)
    if loaded is None:
        return EXIT_CONFIG
    raw, ex = loaded
    out = Path(args.out)
    write_json(out / "config.json", raw)
    rows = sweep_time_optimal(ex.scenario, t_o, ex.weights, ex.horizon, ex.bounds, ex.quad,
                              ex.controller, ex.threshold, jobs=args.jobs)
    write_sweep(out / "sweep.csv", rows)
    print(f"{'method':<16}{'flight[s]':>10}{'err_x':>11}{'err_y':>11}{'err_z':>11}")
    for r in rows:
        if r.metrics is None:
            print(f"{r.label:<16}{'failed':>10}  {r.error}")
            continue
        write_trace(out / f"trace_{_slug(r.label)}.csv", r.metrics.trace)
        e = r.metrics.total_err
        print(f"{r.label:<16}{_fmt_time(r.metrics.flight_time):>10}"
              f"{e[0]:>11.2f}{e[1]:>11.2f}{e[2]:>11.2f}")
    if all(r.metrics is None for r in rows):
        _err("every sweep row failed")
        return EXIT_ABORT
    return EXIT_OK


def cmd_validate(args) -> int:
    loaded = _load(args)
    if loaded is None:
        return EXIT_CONFIG
    raw, _ = loaded
    print(json.dumps(raw, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    return {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
