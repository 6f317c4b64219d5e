"""Command-line interface.

Subcommands:
  run <config.json>    simulate a scenario, write trace/metrics/plots
  metrics <trace.csv>  recompute metrics from a stored trace
  plot <trace.csv>     regenerate the SVG figures from a stored trace

Exit codes: 0 success, 2 validation error, 3 runtime abort.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ConfigError, describe, load_config
from .planner import InfeasibleProfileError
from .simulate import SimTrace, SimulationAbortError, compute_metrics, run_simulation

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _build_parser():
    p = argparse.ArgumentParser(prog="nrtrack",
                                description="merging-scenario tracking "
                                            "and safety-filter simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario config")
    run.add_argument("config", help="scenario JSON file")
    run.add_argument("--out-dir", default=None, help="output directory")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--alpha", type=float, default=None,
                     help="override the controller gain")
    run.add_argument("--horizon", type=float, default=None,
                     help="override the prediction horizon (s)")
    run.add_argument("--duration", type=float, default=None)
    run.add_argument("--no-cbf-long", action="store_true",
                     help="disable the inter-vehicle distance filter")
    run.add_argument("--no-cbf-lat", action="store_true",
                     help="disable the lane-deviation filter")

    met = sub.add_parser("metrics", help="metrics from a stored trace")
    met.add_argument("trace", help="trace CSV file")
    met.add_argument("--config", default=None,
                     help="scenario JSON (for road geometry on curved roads)")

    plot = sub.add_parser("plot", help="figures from a stored trace")
    plot.add_argument("trace", help="trace CSV file")
    plot.add_argument("--out-dir", default=None, help="output directory")
    plot.add_argument("--config", default=None,
                      help="scenario JSON (for road geometry on curved roads)")
    return p


def _apply_overrides(cfg, args):
    ctrl = cfg.controller
    if args.alpha is not None:
        ctrl = dataclasses.replace(ctrl, alpha=args.alpha)
    if args.horizon is not None:
        ctrl = dataclasses.replace(ctrl, horizon=args.horizon)
    changes = {"controller": ctrl}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.duration is not None:
        changes["duration"] = args.duration
    if args.out_dir is not None:
        changes["out_dir"] = args.out_dir
    if args.no_cbf_long or args.no_cbf_lat:
        cbf = cfg.cbf
        if args.no_cbf_long:
            cbf = dataclasses.replace(cbf, longitudinal_enabled=False)
        if args.no_cbf_lat:
            cbf = dataclasses.replace(cbf, lateral_enabled=False)
        changes["cbf"] = cbf
    return dataclasses.replace(cfg, **changes)


def _cmd_run(args) -> int:
    from .output import emit_outputs

    cfg = _apply_overrides(load_config(args.config), args)
    print(describe(cfg))
    trace = run_simulation(cfg)
    metrics = compute_metrics(trace, cfg.geometry) if len(trace) else None
    paths = emit_outputs(trace, metrics, cfg.out_dir, cfg.geometry)
    print(f"wrote {paths['trace']}")
    if metrics is not None:
        print(json.dumps(metrics.to_dict(), indent=2))
    return 0


def _geometry_arg(config_path):
    if config_path is None:
        return None
    return load_config(config_path).geometry


def _cmd_metrics(args) -> int:
    trace = SimTrace.read_csv(args.trace)
    metrics = compute_metrics(trace, _geometry_arg(args.config))
    print(json.dumps(metrics.to_dict(), indent=2))
    return 0


def _cmd_plot(args) -> int:
    from .output import emit_plots

    trace = SimTrace.read_csv(args.trace)
    out_dir = args.out_dir or Path(args.trace).resolve().parent
    for p in emit_plots(trace, out_dir, _geometry_arg(args.config)):
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "plot":
            return _cmd_plot(args)
        raise AssertionError(args.command)
    except (ConfigError, InfeasibleProfileError, FileNotFoundError,
            ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SimulationAbortError, OSError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
