"""Command-line entry point.

Subcommands:
    run <cfg>                 simulate a scenario, write traces + summary
    sweep <cfg> --runs N      randomized-initial-condition convergence sweep
    obsv <cfg> --delta D      observability Gramian across a time grid
    validate <cfg>            parse and check a config, print the result

Output root: --out, else $SE5NAV_OUT, else ./runs. Exit codes: 0 success,
2 bad config, 3 numerical divergence, 4 observability failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .observer import DivergenceError
from .scenario import (
    ConfigError,
    check_gps_pe,
    check_observability,
    parse_scenario,
    run_scenario,
    sweep_agas,
    write_observability_csv,
    write_sweep_csv,
)
from .sensors import ChannelKind

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_OBSERVABILITY = 4


def _out_dir(args, cfg_path: Path, kind: str) -> Path:
    root = args.out or os.environ.get("SE5NAV_OUT") or "runs"
    return Path(root) / f"{cfg_path.stem}-{kind}"


def _cmd_run(args) -> int:
    cfg = parse_scenario(args.config)
    out = _out_dir(args, Path(args.config), "run")
    summary = run_scenario(cfg, out_dir=out)
    print(f"wrote traces to {out}")
    for key, val in summary.to_dict().items():
        print(f"  {key}: {val}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = parse_scenario(args.config).noiseless()
    rows = sweep_agas(
        cfg, n_runs=args.runs, seed=args.seed,
        max_angle_rad=np.deg2rad(args.max_angle_deg),
        translation_ball=args.ball,
    )
    out = _out_dir(args, Path(args.config), "sweep")
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out / "sweep.csv")
    n_conv = sum(r.converged for r in rows)
    worst = max((r.settle_time_s for r in rows if r.settle_time_s is not None), default=None)
    print(f"wrote {out / 'sweep.csv'}")
    print(f"converged {n_conv}/{len(rows)}; worst settle time: {worst}")
    for r in rows:
        if not r.converged:
            print(f"  run {r.run} did not converge (init angle {np.rad2deg(r.init_angle_rad):.1f} deg)")
    return EXIT_OK if n_conv == len(rows) else EXIT_DIVERGED


def _cmd_obsv(args) -> int:
    cfg = parse_scenario(args.config)
    grid = [float(x) for x in args.grid.split(",")] if args.grid else list(np.arange(0.0, 51.0, 5.0))
    reports = check_observability(cfg, delta=args.delta, grid=grid, threshold=args.mu)
    out = _out_dir(args, Path(args.config), "obsv")
    out.mkdir(parents=True, exist_ok=True)
    write_observability_csv(reports, out / "observability.csv")
    all_pass = all(r.passed for r in reports)
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        print(f"t={r.t:6.2f}  delta={r.delta:.2f}  mu={r.mu:.6e}  {status}")
    if any(c.kind is ChannelKind.INERTIAL_POSITION for c in cfg.channels):
        pe = check_gps_pe(cfg, t=grid[0], delta=args.delta, threshold=args.mu)
        print(f"excitation check: min-eig={pe.min_eig:.6e}  {'pass' if pe.passed else 'FAIL'}")
    print(f"wrote {out / 'observability.csv'}")
    return EXIT_OK if all_pass else EXIT_OBSERVABILITY


def _cmd_validate(args) -> int:
    cfg = parse_scenario(args.config)
    print(f"{args.config}: OK")
    print(json.dumps({
        "trajectory": cfg.trajectory.kind,
        "channels": [c.kind.value for c in cfg.channels],
        "duration": cfg.duration,
        "dt": cfg.observer.dt,
        "seed": cfg.seed,
        "noise": cfg.noise,
    }, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="se5nav", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", help="output root directory (default $SE5NAV_OUT or ./runs)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write traces")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="randomized convergence sweep (noiseless)")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--runs", type=int, default=100)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--max-angle-deg", type=float, default=170.0)
    p_sweep.add_argument("--ball", type=float, default=10.0)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_obsv = sub.add_parser("obsv", help="observability Gramian check")
    p_obsv.add_argument("config")
    p_obsv.add_argument("--delta", type=float, default=1.0)
    p_obsv.add_argument("--grid", help="comma-separated window start times (default 0..50 step 5)")
    p_obsv.add_argument("--mu", type=float, default=1e-6, help="pass threshold on min eigenvalue")
    p_obsv.set_defaults(func=_cmd_obsv)

    p_val = sub.add_parser("validate", help="check a scenario config")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as err:
        print(f"error: run diverged: {err}", file=sys.stderr)
        if err.state is not None:
            print(f"  last healthy state at t={err.state.t:.4f}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
